//! Scripted synthetic user.
//!
//! Generates orientation/touch/footswitch traces that solve docking trials
//! under either technique, and drives whole sessions headlessly through the
//! same [`Session`] path a live phone uses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::TrialTable;
use crate::exec::{self, ExecMode};
use crate::filter::angular_distance;
use crate::geometry::{PlanecastState, TechniqueMode};
use crate::math::{Quat, Vec3};
use crate::protocol::{TouchPhase, WireMessage};
use crate::session::{LogRecord, Session, SessionConfig, SessionError};
use crate::task::{TechniqueOrder, TrialPhase, TrialRecord, TrialSpec};

/// Simulated time allowed per trial before the run is declared broken.
pub const TRIAL_BUDGET_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub sample_rate_hz: f64,
    pub rotation_speed_deg_s: f64,
    pub swipe_speed_px_s: f64,
    pub stop_distance_cm: f64,
    /// Samples held at the final pose before swiping, so the host filter
    /// has fully caught up.
    pub hold_samples: usize,
    pub screen_w_px: u32,
    pub screen_h_px: u32,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 50.0,
            rotation_speed_deg_s: 90.0,
            swipe_speed_px_s: 800.0,
            stop_distance_cm: 1.0,
            hold_samples: crate::filter::DEFAULT_WINDOW,
            screen_w_px: 480,
            screen_h_px: 800,
        }
    }
}

impl ControllerConfig {
    pub fn tick_ms(&self) -> u64 {
        ((1000.0 / self.sample_rate_hz).round() as u64).max(1)
    }

    fn validate(&self) -> Result<(), SimError> {
        let positive = [self.sample_rate_hz, self.rotation_speed_deg_s, self.swipe_speed_px_s, self.stop_distance_cm];
        if positive.iter().all(|v| *v > 0.0 && v.is_finite()) && self.screen_w_px > 0 && self.screen_h_px > 0 {
            Ok(())
        } else {
            Err(SimError::Config)
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("controller configuration values must be positive")]
    Config,
    #[error("target at the origin needs no movement")]
    ZeroTarget,
    #[error("planned trace ends {0} cm from the target")]
    Overshoot(f64),
    #[error("trial {trial_id} did not match within {TRIAL_BUDGET_MS} ms of simulated time")]
    Budget { trial_id: u32 },
    #[error("trial {trial_id} ended without a record")]
    NoRecord { trial_id: u32 },
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// A planned gesture sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub messages: Vec<WireMessage>,
    /// Timestamp of the next free tick after the trace.
    pub end_t: u64,
    /// Raw device orientation at the end of the trace.
    pub final_q: Quat,
    /// Finger travel of all strokes.
    pub swipe_px: f64,
}

/// Device orientation whose screen-right axis points along `dir`, reached
/// from `from` by the smallest rotation.
pub fn aim_orientation(from: Quat, dir: Vec3) -> Quat {
    let e1 = from.rotate(Vec3::X);
    let up = from.rotate(Vec3::new(0.0, 0.0, -1.0)).cross(e1);
    let fallback = if up.norm() > 0.5 { up } else { Vec3::Y };
    let turn = Quat::from_arc(e1, dir, fallback);
    (turn * from).normalized().unwrap_or(Quat::IDENTITY)
}

fn push_ramp(out: &mut Vec<WireMessage>, t: &mut u64, from: Quat, to: Quat, cfg: &ControllerConfig) {
    let angle = angular_distance(from, to);
    if angle <= 0.0 {
        return;
    }
    let per_tick = cfg.rotation_speed_deg_s / cfg.sample_rate_hz;
    let steps = (angle / per_tick).ceil().max(1.0) as usize;
    for i in 1..=steps {
        out.push(WireMessage::orientation(*t, from.slerp(to, i as f64 / steps as f64)));
        *t += cfg.tick_ms();
    }
}

/// Rotate to aim, hold, then swipe `|target| / gain` px along +du in
/// strokes that fit on the screen.
fn plan_aim_and_swipe(
    mode: TechniqueMode,
    target: Vec3,
    from: Quat,
    cfg: &ControllerConfig,
    gain: f64,
    t0: u64,
) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    let dir = target.normalized().ok_or(SimError::ZeroTarget)?;
    let aim = aim_orientation(from, dir);
    let tick = cfg.tick_ms();
    let mut t = t0;
    let mut out = Vec::new();

    if angular_distance(from, aim) > 0.0 {
        push_ramp(&mut out, &mut t, from, aim, cfg);
        for _ in 0..cfg.hold_samples {
            out.push(WireMessage::orientation(t, aim));
            t += tick;
        }
    }

    let total_px = target.norm() / gain;
    let w = f64::from(cfg.screen_w_px);
    let (x0, y) = (0.1 * w, 0.5 * f64::from(cfg.screen_h_px));
    let stroke_max = 0.8 * w;
    let step_px = cfg.swipe_speed_px_s / cfg.sample_rate_hz;
    let mut remaining = total_px;
    while remaining > 0.0 {
        let stroke = remaining.min(stroke_max);
        out.push(WireMessage::orientation(t, aim));
        out.push(WireMessage::touch(t, TouchPhase::Down, x0, y));
        t += tick;
        let steps = (stroke / step_px).ceil().max(1.0) as usize;
        for i in 1..=steps {
            let x = if i == steps { x0 + stroke } else { x0 + step_px * i as f64 };
            out.push(WireMessage::orientation(t, aim));
            out.push(WireMessage::touch(t, TouchPhase::Move, x, y));
            t += tick;
        }
        out.push(WireMessage::touch(t, TouchPhase::Up, x0 + stroke, y));
        t += tick;
        remaining -= stroke;
    }

    // Predict where the cursor lands and refuse plans that miss.
    let mut state = PlanecastState::new(mode, gain).map_err(|_| SimError::Config)?;
    state = state.apply_rotation(aim).map_err(|_| SimError::Config)?;
    state = state.apply_touch(total_px, 0.0).map_err(|_| SimError::Config)?;
    let miss = state.cursor.distance(target);
    if miss > cfg.stop_distance_cm {
        return Err(SimError::Overshoot(miss));
    }

    Ok(Trajectory { messages: out, end_t: t, final_q: aim, swipe_px: total_px })
}

/// Pivot mode: swing the plane so screen-right points at the target, then
/// slide out along it. The cursor starts at the pivot, so the swing alone
/// does not move it.
pub fn plan_pivot_trajectory(
    target: Vec3,
    from: Quat,
    cfg: &ControllerConfig,
    gain: f64,
    t0: u64,
) -> Result<Trajectory, SimError> {
    plan_aim_and_swipe(TechniqueMode::Pivot, target, from, cfg, gain, t0)
}

/// Free mode: supinate/pronate until the plane contains the target
/// direction (cursor stays put), then slide to it.
pub fn plan_free_trajectory(
    target: Vec3,
    from: Quat,
    cfg: &ControllerConfig,
    gain: f64,
    t0: u64,
) -> Result<Trajectory, SimError> {
    plan_aim_and_swipe(TechniqueMode::Free, target, from, cfg, gain, t0)
}

/// Result of one headless session.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadlessRun {
    pub records: Vec<TrialRecord>,
    pub log: Vec<LogRecord>,
}

struct Driver {
    session: Session,
    log: Vec<LogRecord>,
    t: u64,
}

const CONN: u64 = 0;

impl Driver {
    fn feed(&mut self, msg: WireMessage, host_t: u64) -> Result<(), SimError> {
        self.session.ingest(CONN, &msg, host_t)?;
        self.log.push(LogRecord::Ingest { host_t, conn: CONN, msg });
        Ok(())
    }

    fn trial(&self) -> Option<&crate::task::Trial> {
        self.session.engine().and_then(|e| e.current())
    }
}

/// Play a whole session plan with the scripted user.
pub fn run_headless(
    plan: Vec<TrialSpec>,
    session_cfg: SessionConfig,
    cfg: &ControllerConfig,
) -> Result<HeadlessRun, SimError> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    cfg.hold_samples = cfg.hold_samples.max(session_cfg.filter.filter_window);
    let tick = cfg.tick_ms();
    let session = Session::with_plan(session_cfg, plan.clone());
    let gain = session.config().gain.unwrap_or_else(|| PlanecastState::default_gain(cfg.screen_w_px));
    let mut d = Driver { log: vec![session.header()], session, t: 0 };

    d.feed(
        WireMessage::Hello { device_id: "sim".into(), screen_w_px: cfg.screen_w_px, screen_h_px: cfg.screen_h_px },
        0,
    )?;

    let mut q_dev = Quat::IDENTITY;
    for (i, spec) in plan.iter().enumerate() {
        let trial_id = i as u32 + 1;
        let started = d.t;

        // Return to the flat pose and hold until the trial is Ready and the
        // filter has caught up.
        let mut ramp = Vec::new();
        let mut t = d.t;
        push_ramp(&mut ramp, &mut t, q_dev, Quat::IDENTITY, &cfg);
        for m in ramp {
            let host_t = m.timestamp().unwrap_or(d.t);
            d.feed(m, host_t)?;
        }
        d.t = t;
        q_dev = Quat::IDENTITY;
        loop {
            let msg = WireMessage::orientation(d.t, q_dev);
            d.feed(msg, d.t)?;
            d.t += tick;
            let ready = d.trial().is_some_and(|tr| tr.id == trial_id && tr.phase() != TrialPhase::AwaitingReset);
            let settled = d.session.filter().last_output().is_some_and(|q| angular_distance(q, Quat::IDENTITY) == 0.0);
            if ready && settled {
                break;
            }
            if d.t - started > TRIAL_BUDGET_MS {
                return Err(SimError::Budget { trial_id });
            }
        }

        let target = d.trial().map(|tr| tr.target).unwrap_or(Vec3::ZERO);
        let traj = match spec.technique {
            TechniqueMode::Pivot => plan_pivot_trajectory(target, q_dev, &cfg, gain, d.t)?,
            TechniqueMode::Free => plan_free_trajectory(target, q_dev, &cfg, gain, d.t)?,
        };
        for m in traj.messages {
            let host_t = m.timestamp().unwrap_or(d.t);
            d.feed(m, host_t)?;
        }
        d.t = traj.end_t;
        q_dev = traj.final_q;

        while !d.trial().is_some_and(|tr| tr.matched()) {
            d.feed(WireMessage::orientation(d.t, q_dev), d.t)?;
            d.t += tick;
            if d.t - started > TRIAL_BUDGET_MS {
                return Err(SimError::Budget { trial_id });
            }
        }
        let before = d.session.records().len();
        d.feed(WireMessage::Footswitch { t: d.t }, d.t)?;
        d.t += tick;
        if d.session.records().len() != before + 1 {
            return Err(SimError::NoRecord { trial_id });
        }
    }

    Ok(HeadlessRun { records: d.session.records().to_vec(), log: d.log })
}

/// One simulated participant.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSpec {
    pub subject_id: String,
    pub seed: u64,
    pub order: TechniqueOrder,
}

/// Participants `1..=n` with seeds `base_seed + i` and technique order
/// alternating between subjects, starting with `first`.
pub fn cohort(n: usize, base_seed: u64, first: TechniqueMode) -> Vec<SubjectSpec> {
    (0..n)
        .map(|i| {
            let technique = if i % 2 == 0 { first } else { first.other() };
            SubjectSpec {
                subject_id: format!("{}", i + 1),
                seed: base_seed + i as u64,
                order: TechniqueOrder::starting_with(technique),
            }
        })
        .collect()
}

/// Run every subject's full session and pool the trial tables.
pub fn simulate_cohort(
    subjects: &[SubjectSpec],
    base: &SessionConfig,
    cfg: &ControllerConfig,
    mode: ExecMode,
) -> Result<TrialTable, SimError> {
    let runs = exec::map(subjects, mode, |s| {
        let session_cfg = SessionConfig { seed: s.seed, technique_order: s.order, ..base.clone() };
        let plan = crate::task::make_session_plan(s.seed, s.order);
        run_headless(plan, session_cfg, cfg).map(|run| TrialTable::from_records(&s.subject_id, &run.records))
    });
    let mut table = TrialTable::default();
    for run in runs {
        table.extend(run?);
    }
    Ok(table)
}
