//! Host-side session: binds decoded wire messages to the orientation filter
//! and the task engine, and records a replayable event log.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{FilterConfig, OrientationFilter, OrientationSample};
use crate::geometry::PlanecastState;
use crate::math::{Quat, Vec3};
use crate::protocol::{TouchPhase, WireMessage};
use crate::task::{
    make_session_plan, TaskConfig, TaskEngine, TaskError, TaskEvent, TechniqueOrder, TrialRecord, TrialSpec,
    DEFAULT_BOX_HALF_EXTENT_CM,
};

pub type ConnId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub seed: u64,
    pub technique_order: TechniqueOrder,
    /// cm per px; derived from the phone's screen width when absent.
    pub gain: Option<f64>,
    pub filter: FilterConfig,
    pub box_half_extent_cm: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            technique_order: TechniqueOrder::PivotFirst,
            gain: None,
            filter: FilterConfig::default(),
            box_half_extent_cm: DEFAULT_BOX_HALF_EXTENT_CM,
        }
    }
}

impl SessionConfig {
    pub fn task_config(&self) -> TaskConfig {
        TaskConfig {
            mt_threshold_deg: self.filter.mt_threshold_deg,
            reset_tolerance_deg: self.filter.reset_tolerance_deg,
            cursor_half_extent_cm: self.box_half_extent_cm,
            target_half_extent_cm: self.box_half_extent_cm,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("connection {conn} sent {tag} before hello")]
    NotGreeted { conn: ConnId, tag: &'static str },
    #[error("{tag} is a host-to-viewer message")]
    HostOnly { tag: &'static str },
    #[error(transparent)]
    Task(#[from] TaskError),
}

#[derive(Debug, Clone, Default)]
struct Connection {
    contact: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Session {
    cfg: SessionConfig,
    plan: Vec<TrialSpec>,
    filter: OrientationFilter,
    engine: Option<TaskEngine>,
    conns: BTreeMap<ConnId, Connection>,
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Self {
        let plan = make_session_plan(cfg.seed, cfg.technique_order);
        Self::with_plan(cfg, plan)
    }

    pub fn with_plan(cfg: SessionConfig, plan: Vec<TrialSpec>) -> Self {
        Self {
            filter: OrientationFilter::new(cfg.filter.filter_window),
            cfg,
            plan,
            engine: None,
            conns: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn plan(&self) -> &[TrialSpec] {
        &self.plan
    }

    pub fn header(&self) -> LogRecord {
        LogRecord::Header { config: self.cfg.clone(), plan: self.plan.clone() }
    }

    pub fn engine(&self) -> Option<&TaskEngine> {
        self.engine.as_ref()
    }

    pub fn filter(&self) -> &OrientationFilter {
        &self.filter
    }

    pub fn records(&self) -> &[TrialRecord] {
        self.engine.as_ref().map(|e| e.records()).unwrap_or(&[])
    }

    pub fn finished(&self) -> bool {
        self.engine.as_ref().is_some_and(|e| e.finished())
    }

    /// Process one message from `conn`, received at host time `host_t`.
    /// Returns the records to broadcast to viewers.
    pub fn ingest(&mut self, conn: ConnId, msg: &WireMessage, host_t: u64) -> Result<Vec<WireMessage>, SessionError> {
        let mut out = Vec::new();
        if let WireMessage::Hello { device_id, screen_w_px, .. } = msg {
            log::info!("connection {conn}: hello from {device_id}");
            self.conns.insert(conn, Connection::default());
            if self.engine.is_none() {
                let gain = self.cfg.gain.unwrap_or_else(|| PlanecastState::default_gain(*screen_w_px));
                let mut engine = TaskEngine::new(self.plan.clone(), gain, self.cfg.task_config())?;
                let step = engine.start();
                self.engine = Some(engine);
                self.emit_step(&mut out, step, host_t);
            }
            out.push(self.snapshot(host_t));
            return Ok(out);
        }
        if matches!(
            msg,
            WireMessage::TrialBegin { .. } | WireMessage::TrialEnd { .. } | WireMessage::StateSnapshot { .. }
        ) {
            return Err(SessionError::HostOnly { tag: msg.type_tag() });
        }
        let tag = msg.type_tag();
        let (Some(connection), Some(_)) = (self.conns.get_mut(&conn), self.engine.as_ref()) else {
            return Err(SessionError::NotGreeted { conn, tag });
        };

        let event = match *msg {
            WireMessage::Orientation { t, q } => {
                let sample = OrientationSample { t, q: Quat::from_components(q[0], q[1], q[2], q[3]) };
                let filtered = self.filter.push(sample);
                Some(TaskEvent::Orientation(self.filter.relative(filtered.q)))
            }
            WireMessage::Touch { phase, x_px, y_px, .. } => match phase {
                TouchPhase::Down => {
                    connection.contact = Some((x_px, y_px));
                    Some(TaskEvent::TouchDown)
                }
                TouchPhase::Move => match connection.contact.replace((x_px, y_px)) {
                    Some((px, py)) => Some(TaskEvent::TouchMove { du: x_px - px, dv: y_px - py }),
                    None => {
                        connection.contact = None;
                        log::debug!("connection {conn}: touch move without down ignored");
                        None
                    }
                },
                TouchPhase::Up => {
                    connection.contact = None;
                    Some(TaskEvent::TouchUp)
                }
            },
            WireMessage::Footswitch { .. } => Some(TaskEvent::Footswitch),
            WireMessage::Calibrate { .. } => {
                let q = self.filter.last_output().unwrap_or(Quat::IDENTITY);
                self.filter.calibrate_reference(q);
                None
            }
            _ => None,
        };

        if let Some(event) = event {
            let step = self.engine.as_mut().expect("engine exists after hello").handle(event, host_t);
            self.emit_step(&mut out, step, host_t);
        }
        out.push(self.snapshot(host_t));
        Ok(out)
    }

    fn emit_step(&self, out: &mut Vec<WireMessage>, step: crate::task::EngineStep, t: u64) {
        if let Some(r) = step.ended {
            out.push(WireMessage::TrialEnd { t, trial_id: r.trial_id, mt_ms: r.mt_ms, d_cm: r.d_cm, t_px: r.t_px });
        }
        if let Some((trial_id, spec, target)) = step.began {
            out.push(WireMessage::TrialBegin {
                t,
                trial_id,
                technique: spec.technique,
                condition: spec.condition,
                target,
                radius_cm: spec.radius_cm,
            });
        }
    }

    /// Current scene for viewers.
    pub fn snapshot(&self, t: u64) -> WireMessage {
        let Some(engine) = self.engine.as_ref() else {
            let p = crate::geometry::Plane::REFERENCE;
            return WireMessage::StateSnapshot {
                t,
                cursor: Vec3::ZERO,
                pivot: p.pivot,
                e1: p.e1,
                e2: p.e2,
                target: Vec3::ZERO,
                matched: false,
                phase: "idle".into(),
            };
        };
        let state = engine.state();
        let (target, matched, phase) = match engine.current() {
            Some(trial) => (trial.target, trial.matched(), trial.phase().as_str()),
            None => (Vec3::ZERO, false, "finished"),
        };
        let phase = if engine.finished() { "finished" } else { phase };
        WireMessage::StateSnapshot {
            t,
            cursor: state.cursor,
            pivot: state.plane.pivot,
            e1: state.plane.e1,
            e2: state.plane.e2,
            target,
            matched,
            phase: phase.into(),
        }
    }
}

/// One line of the session event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Header { config: SessionConfig, plan: Vec<TrialSpec> },
    Ingest { host_t: u64, conn: ConnId, msg: WireMessage },
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("log line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("log does not start with a header record")]
    MissingHeader,
}

pub fn write_log<W: Write>(mut w: W, records: &[LogRecord]) -> Result<(), LogError> {
    for r in records {
        append_log(&mut w, r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn append_log<W: Write>(mut w: W, record: &LogRecord) -> Result<(), LogError> {
    serde_json::to_writer(&mut w, record).map_err(|source| LogError::Json { line: 0, source })?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_log<R: BufRead>(r: R) -> Result<Vec<LogRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LogError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayOutput {
    pub broadcast: Vec<WireMessage>,
    pub records: Vec<TrialRecord>,
    pub rejected: usize,
}

/// Feed a recorded log through a fresh session.
pub fn replay(log: &[LogRecord]) -> Result<ReplayOutput, LogError> {
    let Some(LogRecord::Header { config, plan }) = log.first() else {
        return Err(LogError::MissingHeader);
    };
    let mut session = Session::with_plan(config.clone(), plan.clone());
    let mut out = ReplayOutput::default();
    for record in &log[1..] {
        if let LogRecord::Ingest { host_t, conn, msg } = record {
            match session.ingest(*conn, msg, *host_t) {
                Ok(b) => out.broadcast.extend(b),
                Err(e) => {
                    log::debug!("replay: {e}");
                    out.rejected += 1;
                }
            }
        }
    }
    out.records = session.records().to_vec();
    Ok(out)
}
