use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::net::TcpListener;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use planecast::analytics::{cell_matrix, rm_anova_oneway, summarize, Factor, Measure, TrialTable};
use planecast::exec::ExecMode;
use planecast::filter::FilterConfig;
use planecast::geometry::TechniqueMode;
use planecast::session::{read_log, replay, write_log, SessionConfig};
use planecast::sim::{cohort, run_headless, simulate_cohort, ControllerConfig};
use planecast::task::{make_session_plan, TechniqueOrder};

use crate::server::{self, ServeConfig};

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "0.0.0.0")]
    pub host: String,
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    /// Technique of the first block.
    #[arg(long, default_value = "pivot")]
    pub technique: TechniqueMode,
    /// cm per px; defaults to 40 cm across the phone's screen width.
    #[arg(long)]
    pub gain: Option<f64>,
    #[arg(long, default_value_t = planecast::filter::DEFAULT_WINDOW)]
    pub filter_window: usize,
    /// JSONL session log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Trials CSV written at the end of the session.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Technique of the first block; alternates across subjects.
    #[arg(long, default_value = "pivot")]
    pub technique: TechniqueMode,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Trials CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// JSONL session log of the run (single subject only).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Simulated subjects; subject i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub subjects: usize,
    /// Run subjects one after another instead of on the thread pool.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Trials CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Trials CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// technique, radius, condition or position.
    #[arg(long)]
    pub factor: Factor,
    /// mt, d or t.
    #[arg(long)]
    pub measure: Measure,
    /// Per-level means as CSV.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

pub fn serve(args: &ServeArgs) -> anyhow::Result<()> {
    if args.gain.is_some_and(|g| !(g.is_finite() && g > 0.0)) {
        bail!("--gain must be positive");
    }
    let listener = TcpListener::bind((args.host.as_str(), args.port))
        .with_context(|| format!("binding {}:{}", args.host, args.port))?;
    let cfg = ServeConfig {
        session: SessionConfig {
            seed: args.seed,
            technique_order: TechniqueOrder::starting_with(args.technique),
            gain: args.gain,
            filter: FilterConfig { filter_window: args.filter_window.max(1), ..Default::default() },
            ..Default::default()
        },
        log: args.log.clone(),
        trials_csv: args.out.clone(),
    };
    let handle = server::spawn(listener, cfg)?;
    println!("listening on {}", handle.local_addr());
    let records = handle.join()?;
    println!("session finished: {} trials", records.len());
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> anyhow::Result<TrialTable> {
    if args.subjects == 0 {
        bail!("--subjects must be at least 1");
    }
    let ctrl = ControllerConfig::default();
    let table = if args.subjects == 1 {
        let order = TechniqueOrder::starting_with(args.technique);
        let cfg = SessionConfig { seed: args.seed, technique_order: order, ..Default::default() };
        let run = run_headless(make_session_plan(args.seed, order), cfg, &ctrl)?;
        if let Some(path) = &args.trace {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_log(BufWriter::new(file), &run.log)?;
        }
        TrialTable::from_records("1", &run.records)
    } else {
        if args.trace.is_some() {
            bail!("--trace records a single session; drop it or use --subjects 1");
        }
        let mode = if args.sequential { ExecMode::Sequential } else { ExecMode::Parallel };
        let subjects = cohort(args.subjects, args.seed, args.technique);
        simulate_cohort(&subjects, &SessionConfig::default(), &ctrl, mode)?
    };
    write_table(&table, &args.out)?;
    Ok(table)
}

pub fn replay_trace(args: &ReplayArgs) -> anyhow::Result<TrialTable> {
    let file = File::open(&args.trace).with_context(|| format!("opening {}", args.trace.display()))?;
    let out = replay(&read_log(BufReader::new(file))?)?;
    if out.rejected > 0 {
        log::warn!("{} logged messages were rejected on replay", out.rejected);
    }
    let table = TrialTable::from_records("1", &out.records);
    write_table(&table, &args.out)?;
    Ok(table)
}

/// Per-level means and the one-way repeated-measures ANOVA, as a printable report.
pub fn stats(args: &StatsArgs) -> anyhow::Result<String> {
    let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let table = TrialTable::read_csv(BufReader::new(file))?;
    let levels = summarize(&table, args.factor, args.measure)?;
    let factor = format!("{:?}", args.factor).to_lowercase();
    let unit = args.measure.unit();

    let mut report = String::new();
    writeln!(report, "{factor:>10}  {:>12}  subjects  trials", format!("mean ({unit})"))?;
    for l in &levels {
        let mean = l.mean.map_or("-".to_string(), |m| format!("{m:.3}"));
        writeln!(report, "{:>10}  {mean:>12}  {:>8}  {:>6}", l.level, l.subjects, l.trials)?;
    }
    match cell_matrix(&table, args.factor, args.measure).and_then(|(_, m)| rm_anova_oneway(&m)) {
        Ok(r) => writeln!(
            report,
            "F({}, {}) = {:.4}, p = {:.4} (repeated measures, no sphericity correction)",
            r.df1, r.df2, r.f, r.p
        )?,
        Err(e) => writeln!(report, "ANOVA not available: {e}")?,
    }

    if let Some(path) = &args.export {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(["factor", "level", "measure", "unit", "mean", "subjects", "trials"])?;
        let measure = format!("{:?}", args.measure).to_lowercase();
        for l in &levels {
            let mean = l.mean.map(|m| m.to_string()).unwrap_or_default();
            w.write_record([
                factor.as_str(),
                &l.level,
                &measure,
                unit,
                &mean,
                &l.subjects.to_string(),
                &l.trials.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(report)
}

fn write_table(table: &TrialTable, path: &PathBuf) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    table.write_csv(BufWriter::new(file))?;
    Ok(())
}
