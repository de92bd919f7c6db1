//! TCP host for phone and viewer connections.
//!
//! A connection whose first bytes are `GET ` is upgraded to a websocket and
//! exchanges one wire message per text frame. Anything else is treated as
//! newline-delimited JSON. Every inbound message goes through a single
//! executor thread that owns the [`Session`]; its outputs are broadcast to
//! all connections.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use anyhow::Context;
use planecast::analytics::TrialTable;
use planecast::protocol::{decode, encode_string, WireMessage};
use planecast::session::{append_log, ConnId, LogRecord, Session, SessionConfig};
use planecast::task::TrialRecord;
use tungstenite::{Message, WebSocket};

const WS_POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, Default)]
pub struct ServeConfig {
    pub session: SessionConfig,
    /// JSONL session log, header first.
    pub log: Option<PathBuf>,
    /// Trials CSV written when the session finishes or the server stops.
    pub trials_csv: Option<PathBuf>,
}

enum Event {
    Connected { conn: ConnId, outbox: Sender<String>, peer: Option<SocketAddr> },
    Line { conn: ConnId, line: String, arrival_ms: u64 },
    Closed(ConnId),
    Stop,
}

pub struct ServerHandle {
    addr: SocketAddr,
    events: Sender<Event>,
    stopping: Arc<AtomicBool>,
    executor: JoinHandle<anyhow::Result<Vec<TrialRecord>>>,
    acceptor: JoinHandle<()>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Ask the server to stop; [`ServerHandle::join`] then returns promptly.
    pub fn stop(&self) {
        let _ = self.events.send(Event::Stop);
    }

    /// Wait for the session to finish (or [`ServerHandle::stop`]) and
    /// return the completed trials.
    pub fn join(self) -> anyhow::Result<Vec<TrialRecord>> {
        let result = self.executor.join().map_err(|_| anyhow::anyhow!("executor thread panicked"))?;
        self.stopping.store(true, Ordering::SeqCst);
        // Wake the acceptor out of its blocking accept.
        let _ = TcpStream::connect(self.addr);
        let _ = self.acceptor.join();
        result
    }
}

pub fn spawn(listener: TcpListener, cfg: ServeConfig) -> anyhow::Result<ServerHandle> {
    let addr = listener.local_addr()?;
    let log = match &cfg.log {
        Some(path) => {
            Some(BufWriter::new(File::create(path).with_context(|| format!("creating log {}", path.display()))?))
        }
        None => None,
    };
    let (tx, rx) = mpsc::channel();
    let stopping = Arc::new(AtomicBool::new(false));
    let epoch = Instant::now();

    let executor = {
        let cfg = cfg.clone();
        thread::Builder::new().name("executor".into()).spawn(move || execute(rx, cfg, log))?
    };
    let acceptor = {
        let tx = tx.clone();
        let stopping = stopping.clone();
        thread::Builder::new().name("acceptor".into()).spawn(move || accept(listener, tx, stopping, epoch))?
    };
    log::info!("listening on {addr}");
    Ok(ServerHandle { addr, events: tx, stopping, executor, acceptor })
}

fn accept(listener: TcpListener, events: Sender<Event>, stopping: Arc<AtomicBool>, epoch: Instant) {
    let mut next_id: ConnId = 1;
    for stream in listener.incoming() {
        if stopping.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let conn = next_id;
        next_id += 1;
        let events = events.clone();
        let spawned = thread::Builder::new().name(format!("conn-{conn}")).spawn(move || {
            if let Err(e) = connection(conn, stream, &events, epoch) {
                log::info!("connection {conn} closed: {e}");
            }
            let _ = events.send(Event::Closed(conn));
        });
        if let Err(e) = spawned {
            log::error!("could not spawn connection thread: {e}");
        }
    }
}

/// A client silent for this long is taken to be a line-protocol viewer.
const SNIFF_TIMEOUT: Duration = Duration::from_millis(250);

fn is_http(stream: &TcpStream) -> io::Result<bool> {
    stream.set_read_timeout(Some(SNIFF_TIMEOUT))?;
    let sniffed = sniff(stream);
    stream.set_read_timeout(None)?;
    match sniffed {
        Err(e) if would_block(&e) => Ok(false),
        other => other,
    }
}

fn sniff(stream: &TcpStream) -> io::Result<bool> {
    let mut buf = [0u8; 4];
    loop {
        let n = stream.peek(&mut buf)?;
        if n == 0 {
            return Ok(false);
        }
        if n == buf.len() || !b"GET ".starts_with(&buf[..n]) {
            return Ok(&buf[..n] == b"GET ");
        }
        thread::sleep(Duration::from_millis(1));
    }
}

fn connection(conn: ConnId, stream: TcpStream, events: &Sender<Event>, epoch: Instant) -> anyhow::Result<()> {
    stream.set_nodelay(true)?;
    let (outbox, inbox) = mpsc::channel();
    let peer = stream.peer_addr().ok();
    if is_http(&stream)? {
        let ws = tungstenite::accept(stream).map_err(|e| anyhow::anyhow!("websocket handshake: {e}"))?;
        events.send(Event::Connected { conn, outbox, peer })?;
        websocket(conn, ws, inbox, events, epoch)
    } else {
        events.send(Event::Connected { conn, outbox, peer })?;
        let writer = stream.try_clone()?;
        thread::spawn(move || line_writer(writer, inbox));
        for line in BufReader::new(stream).lines() {
            let line = line?;
            let arrival_ms = epoch.elapsed().as_millis() as u64;
            events.send(Event::Line { conn, line, arrival_ms })?;
        }
        Ok(())
    }
}

fn line_writer(mut stream: TcpStream, inbox: Receiver<String>) {
    for line in inbox {
        if stream.write_all(line.as_bytes()).and_then(|_| stream.write_all(b"\n")).is_err() {
            break;
        }
    }
    // The host is done with this connection once its outbox is gone.
    let _ = stream.shutdown(Shutdown::Both);
}

fn websocket(
    conn: ConnId,
    mut ws: WebSocket<TcpStream>,
    inbox: Receiver<String>,
    events: &Sender<Event>,
    epoch: Instant,
) -> anyhow::Result<()> {
    ws.get_ref().set_read_timeout(Some(WS_POLL))?;
    loop {
        loop {
            match inbox.try_recv() {
                Ok(text) => ws.write(Message::text(text))?,
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    return Ok(());
                }
            }
        }
        match ws.flush() {
            Ok(()) => {}
            Err(tungstenite::Error::Io(e)) if would_block(&e) => {}
            Err(e) => return Err(e.into()),
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                let arrival_ms = epoch.elapsed().as_millis() as u64;
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    events.send(Event::Line { conn, line: line.to_owned(), arrival_ms })?;
                }
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if would_block(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
    }
}

fn would_block(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut)
}

struct Peer {
    outbox: Sender<String>,
}

fn execute(
    events: Receiver<Event>,
    cfg: ServeConfig,
    mut log: Option<BufWriter<File>>,
) -> anyhow::Result<Vec<TrialRecord>> {
    let mut session = Session::new(cfg.session.clone());
    let mut peers: BTreeMap<ConnId, Peer> = BTreeMap::new();
    let mut last_t = 0u64;
    if let Some(w) = log.as_mut() {
        append_log(&mut *w, &session.header())?;
        w.flush()?;
    }

    for event in events {
        match event {
            Event::Connected { conn, outbox, peer } => {
                log::info!("connection {conn} from {peer:?}");
                // Late viewers get the current state straight away.
                if session.engine().is_some() {
                    let _ = outbox.send(encode_string(&session.snapshot(last_t))?);
                }
                peers.insert(conn, Peer { outbox });
            }
            Event::Closed(conn) => {
                peers.remove(&conn);
            }
            Event::Stop => break,
            Event::Line { conn, line, arrival_ms } => {
                if line.trim().is_empty() {
                    continue;
                }
                let msg = match decode(line.as_bytes()) {
                    Ok(m) => m,
                    Err(e) => {
                        log::warn!("connection {conn}: {e}");
                        continue;
                    }
                };
                let host_t = arrival_ms.max(last_t);
                last_t = host_t;
                if let Some(w) = log.as_mut() {
                    append_log(&mut *w, &LogRecord::Ingest { host_t, conn, msg: msg.clone() })?;
                    w.flush()?;
                }
                match session.ingest(conn, &msg, host_t) {
                    Ok(out) => broadcast(&peers, &out)?,
                    Err(e) => log::warn!("connection {conn}: {e}"),
                }
                if session.finished() {
                    log::info!("session finished with {} trials", session.records().len());
                    break;
                }
            }
        }
    }

    drop(peers);
    if let Some(path) = &cfg.trials_csv {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        TrialTable::from_records("1", session.records()).write_csv(file)?;
    }
    Ok(session.records().to_vec())
}

fn broadcast(peers: &BTreeMap<ConnId, Peer>, out: &[WireMessage]) -> anyhow::Result<()> {
    for msg in out {
        let text = encode_string(msg)?;
        for peer in peers.values() {
            let _ = peer.outbox.send(text.clone());
        }
    }
    Ok(())
}
