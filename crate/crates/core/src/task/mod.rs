//! Docking-task harness: target layout, session plans and the per-trial
//! state machine that turns input events into trial records.

mod layout;
mod plan;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{angular_distance, crossed, FilterConfig};
use crate::geometry::{GeometryError, PlanecastState, TechniqueMode};
use crate::math::{Quat, Vec3};

pub use layout::{target_direction, target_position, POSITIONS, RADII_CM};
pub use plan::{make_session_plan, Condition, TechniqueOrder, TrialSpec, TRIALS_PER_SESSION};

pub const DEFAULT_BOX_HALF_EXTENT_CM: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("target position {0} outside 1..=12")]
    PositionOutOfRange(usize),
    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub center: Vec3,
    pub half_extents: Vec3,
}

impl Aabb {
    pub fn cube(center: Vec3, half: f64) -> Self {
        Self { center, half_extents: Vec3::new(half, half, half) }
    }

    /// Closed-interval overlap on all three axes; touching counts.
    pub fn intersects(&self, other: &Aabb) -> bool {
        let d = self.center - other.center;
        let h = self.half_extents + other.half_extents;
        d.x.abs() <= h.x && d.y.abs() <= h.y && d.z.abs() <= h.z
    }
}

pub fn aabb_intersect(a: &Aabb, b: &Aabb) -> bool {
    a.intersects(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialPhase {
    AwaitingReset,
    Ready,
    Moving,
    Ended,
}

impl TrialPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialPhase::AwaitingReset => "awaiting_reset",
            TrialPhase::Ready => "ready",
            TrialPhase::Moving => "moving",
            TrialPhase::Ended => "ended",
        }
    }
}

/// Input to the trial state machine. Orientations are already filtered and
/// expressed relative to the reference pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskEvent {
    Orientation(Quat),
    TouchDown,
    TouchMove { du: f64, dv: f64 },
    TouchUp,
    Footswitch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub mt_threshold_deg: f64,
    pub reset_tolerance_deg: f64,
    pub cursor_half_extent_cm: f64,
    pub target_half_extent_cm: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        let f = FilterConfig::default();
        Self {
            mt_threshold_deg: f.mt_threshold_deg,
            reset_tolerance_deg: f.reset_tolerance_deg,
            cursor_half_extent_cm: DEFAULT_BOX_HALF_EXTENT_CM,
            target_half_extent_cm: DEFAULT_BOX_HALF_EXTENT_CM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u32,
    pub spec: TrialSpec,
    /// Movement time, ms.
    pub mt_ms: u64,
    /// Centre-to-centre docking error at the footswitch, cm.
    pub d_cm: f64,
    /// Finger travel while pressed, px.
    pub t_px: f64,
    pub started_at: u64,
    pub ended_at: u64,
    pub matched_at_end: bool,
}

/// One docking trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub id: u32,
    pub spec: TrialSpec,
    pub target: Vec3,
    phase: TrialPhase,
    state: PlanecastState,
    cfg: TaskConfig,
    q_start: Quat,
    mt_start: Option<u64>,
    travel_px: f64,
    contact_down: bool,
    matched: bool,
}

impl Trial {
    /// A fresh trial waiting for the device to return to the reference pose.
    /// `carried` supplies the current plane orientation and gain.
    pub fn new(id: u32, spec: TrialSpec, carried: &PlanecastState, cfg: TaskConfig) -> Result<Self, TaskError> {
        let target = target_position(spec.position_idx, spec.radius_cm)?;
        Ok(Self {
            id,
            spec,
            target,
            phase: TrialPhase::AwaitingReset,
            state: carried.with_mode(spec.technique),
            cfg,
            q_start: Quat::IDENTITY,
            mt_start: None,
            travel_px: 0.0,
            contact_down: false,
            matched: false,
        })
    }

    pub fn phase(&self) -> TrialPhase {
        self.phase
    }

    pub fn state(&self) -> &PlanecastState {
        &self.state
    }

    pub fn matched(&self) -> bool {
        self.matched
    }

    pub fn travel_px(&self) -> f64 {
        self.travel_px
    }

    pub fn mt_start(&self) -> Option<u64> {
        self.mt_start
    }

    pub fn cursor_box(&self) -> Aabb {
        Aabb::cube(self.state.cursor, self.cfg.cursor_half_extent_cm)
    }

    pub fn target_box(&self) -> Aabb {
        Aabb::cube(self.target, self.cfg.target_half_extent_cm)
    }

    /// Add one move segment to the finger-travel total. Moves without a
    /// pressed contact do not count.
    pub fn accumulate_touch_travel(&mut self, du: f64, dv: f64) -> f64 {
        if self.contact_down {
            self.travel_px += du.hypot(dv);
        } else {
            log::debug!("trial {}: move without touch-down ignored", self.id);
        }
        self.travel_px
    }

    /// Advance the state machine by one event observed at host time `now`.
    pub fn step(mut self, event: TaskEvent, now: u64) -> (Self, Option<TrialRecord>) {
        match self.phase {
            TrialPhase::AwaitingReset => self.on_awaiting_reset(event),
            TrialPhase::Ready => self.on_ready(event, now),
            TrialPhase::Moving => return self.on_moving(event, now),
            TrialPhase::Ended => {}
        }
        (self, None)
    }

    fn rotate(&mut self, q: Quat) {
        match self.state.apply_rotation(q) {
            Ok(s) => self.state = s,
            Err(e) => log::warn!("trial {}: {e}", self.id),
        }
    }

    fn refresh_match(&mut self) {
        self.matched = self.cursor_box().intersects(&self.target_box());
    }

    fn on_awaiting_reset(&mut self, event: TaskEvent) {
        match event {
            TaskEvent::Orientation(q) => {
                self.rotate(q);
                if angular_distance(q, Quat::IDENTITY) <= self.cfg.reset_tolerance_deg {
                    self.state = self.state.recentered();
                    self.q_start = q;
                    self.phase = TrialPhase::Ready;
                    self.refresh_match();
                }
            }
            TaskEvent::Footswitch => log::debug!("trial {}: footswitch before reset ignored", self.id),
            _ => {}
        }
    }

    fn on_ready(&mut self, event: TaskEvent, now: u64) {
        match event {
            TaskEvent::Orientation(q) => {
                self.rotate(q);
                if crossed(self.q_start, q, self.cfg.mt_threshold_deg) {
                    self.begin_moving(now);
                }
            }
            TaskEvent::TouchDown => {
                self.contact_down = true;
                self.begin_moving(now);
            }
            TaskEvent::Footswitch => log::debug!("trial {}: footswitch before movement ignored", self.id),
            TaskEvent::TouchMove { .. } | TaskEvent::TouchUp => {}
        }
        self.refresh_match();
    }

    fn begin_moving(&mut self, now: u64) {
        self.mt_start = Some(now);
        self.phase = TrialPhase::Moving;
    }

    fn on_moving(mut self, event: TaskEvent, now: u64) -> (Self, Option<TrialRecord>) {
        match event {
            TaskEvent::Orientation(q) => self.rotate(q),
            TaskEvent::TouchDown => self.contact_down = true,
            TaskEvent::TouchUp => self.contact_down = false,
            TaskEvent::TouchMove { du, dv } => {
                if self.contact_down {
                    match self.state.apply_touch(du, dv) {
                        Ok(s) => {
                            self.state = s;
                            self.accumulate_touch_travel(du, dv);
                        }
                        Err(e) => log::warn!("trial {}: {e}", self.id),
                    }
                } else {
                    log::debug!("trial {}: move without touch-down ignored", self.id);
                }
            }
            TaskEvent::Footswitch => {
                self.refresh_match();
                if !self.matched {
                    log::debug!("trial {}: footswitch without match ignored", self.id);
                    return (self, None);
                }
                let started_at = self.mt_start.unwrap_or(now);
                let record = TrialRecord {
                    trial_id: self.id,
                    spec: self.spec,
                    mt_ms: now.saturating_sub(started_at),
                    d_cm: self.cursor_box().center.distance(self.target_box().center),
                    t_px: self.travel_px,
                    started_at,
                    ended_at: now,
                    matched_at_end: true,
                };
                self.phase = TrialPhase::Ended;
                self.contact_down = false;
                if self.state.mode == TechniqueMode::Free {
                    self.state = self.state.recentered();
                }
                return (self, Some(record));
            }
        }
        self.refresh_match();
        (self, None)
    }
}

/// Free-function form of [`Trial::step`].
pub fn trial_step(trial: Trial, event: TaskEvent, now: u64) -> (Trial, Option<TrialRecord>) {
    trial.step(event, now)
}

/// Output of one engine step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EngineStep {
    /// Trial that entered `AwaitingReset` during this step.
    pub began: Option<(u32, TrialSpec, Vec3)>,
    pub ended: Option<TrialRecord>,
}

/// Runs a whole session plan, one trial after another.
#[derive(Debug, Clone)]
pub struct TaskEngine {
    plan: Vec<TrialSpec>,
    next: usize,
    current: Option<Trial>,
    idle: PlanecastState,
    cfg: TaskConfig,
    records: Vec<TrialRecord>,
}

impl TaskEngine {
    pub fn new(plan: Vec<TrialSpec>, gain: f64, cfg: TaskConfig) -> Result<Self, TaskError> {
        let first = plan.first().map(|s| s.technique).unwrap_or(TechniqueMode::Pivot);
        Ok(Self { plan, next: 0, current: None, idle: PlanecastState::new(first, gain)?, cfg, records: Vec::new() })
    }

    /// Load the first trial.
    pub fn start(&mut self) -> EngineStep {
        let mut out = EngineStep::default();
        if self.current.is_none() && self.next == 0 {
            self.advance(&mut out);
        }
        out
    }

    fn advance(&mut self, out: &mut EngineStep) {
        let carried = self.current.as_ref().map(|t| t.state).unwrap_or(self.idle);
        self.idle = carried;
        self.current = None;
        if let Some(spec) = self.plan.get(self.next).copied() {
            self.next += 1;
            let id = self.next as u32;
            match Trial::new(id, spec, &carried, self.cfg) {
                Ok(trial) => {
                    out.began = Some((id, spec, trial.target));
                    self.current = Some(trial);
                }
                Err(e) => log::error!("skipping trial {id}: {e}"),
            }
        }
    }

    pub fn handle(&mut self, event: TaskEvent, now: u64) -> EngineStep {
        let mut out = EngineStep::default();
        if self.current.as_ref().is_some_and(|t| t.phase() == TrialPhase::Ended) {
            self.advance(&mut out);
        }
        match self.current.take() {
            Some(trial) => {
                let (trial, record) = trial.step(event, now);
                if let Some(r) = record {
                    self.records.push(r);
                    out.ended = Some(r);
                }
                self.current = Some(trial);
            }
            None => {
                if let TaskEvent::Orientation(q) = event {
                    if let Ok(s) = self.idle.apply_rotation(q) {
                        self.idle = s;
                    }
                }
            }
        }
        out
    }

    pub fn current(&self) -> Option<&Trial> {
        self.current.as_ref()
    }

    /// Planecast state currently on screen.
    pub fn state(&self) -> &PlanecastState {
        self.current.as_ref().map(|t| t.state()).unwrap_or(&self.idle)
    }

    pub fn finished(&self) -> bool {
        self.next >= self.plan.len() && self.current.as_ref().is_none_or(|t| t.phase() == TrialPhase::Ended)
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn plan(&self) -> &[TrialSpec] {
        &self.plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(idx: usize, radius: f64, technique: TechniqueMode) -> TrialSpec {
        TrialSpec { position_idx: idx, radius_cm: radius, technique, condition: Condition::Speed }
    }

    fn ready_trial(technique: TechniqueMode, gain: f64) -> Trial {
        let base = PlanecastState::new(technique, gain).unwrap();
        let t = Trial::new(1, spec(9, 52.0, technique), &base, TaskConfig::default()).unwrap();
        let (t, _) = t.step(TaskEvent::Orientation(Quat::IDENTITY), 0);
        assert_eq!(t.phase(), TrialPhase::Ready);
        t
    }

    #[test]
    fn aabb_cases() {
        let a = Aabb::cube(Vec3::ZERO, 4.0);
        assert!(aabb_intersect(&a, &a));
        assert!(!aabb_intersect(&a, &Aabb::cube(Vec3::new(100.0, 0.0, 0.0), 4.0)));
        assert!(aabb_intersect(&a, &Aabb::cube(Vec3::new(8.0, 0.0, 0.0), 4.0)));
        assert!(!aabb_intersect(&a, &Aabb::cube(Vec3::new(8.0 + 1e-9, 0.0, 0.0), 4.0)));
        // Overlap on two axes only.
        assert!(!aabb_intersect(&a, &Aabb::cube(Vec3::new(1.0, 1.0, 9.0), 4.0)));
    }

    #[test]
    fn awaiting_reset_ignores_touch_and_footswitch() {
        let base = PlanecastState::new(TechniqueMode::Pivot, 0.1).unwrap();
        let t = Trial::new(1, spec(9, 52.0, TechniqueMode::Pivot), &base, TaskConfig::default()).unwrap();
        let (t, _) = t.step(TaskEvent::TouchDown, 1);
        let (t, _) = t.step(TaskEvent::TouchMove { du: 50.0, dv: 0.0 }, 2);
        let (t, r) = t.step(TaskEvent::Footswitch, 3);
        assert!(r.is_none());
        assert_eq!(t.phase(), TrialPhase::AwaitingReset);
        // Tilted beyond the reset tolerance: still waiting.
        let (t, _) = t.step(TaskEvent::Orientation(Quat::from_axis_angle_deg(Vec3::X, 6.0)), 4);
        assert_eq!(t.phase(), TrialPhase::AwaitingReset);
        let (t, _) = t.step(TaskEvent::Orientation(Quat::from_axis_angle_deg(Vec3::X, 4.0)), 5);
        assert_eq!(t.phase(), TrialPhase::Ready);
        assert_eq!(t.state().cursor, Vec3::ZERO);
    }

    #[test]
    fn footswitch_without_match_is_ignored() {
        let t = ready_trial(TechniqueMode::Pivot, 0.1);
        let (t, _) = t.step(TaskEvent::TouchDown, 10);
        let (t, _) = t.step(TaskEvent::TouchMove { du: 100.0, dv: 0.0 }, 20);
        let (t, r) = t.step(TaskEvent::Footswitch, 30);
        assert!(r.is_none());
        assert_eq!(t.phase(), TrialPhase::Moving);
    }

    #[test]
    fn exact_dock_gives_zero_error() {
        let t = ready_trial(TechniqueMode::Free, 0.1);
        let (t, _) = t.step(TaskEvent::TouchDown, 100);
        let (t, _) = t.step(TaskEvent::TouchMove { du: 520.0, dv: 0.0 }, 150);
        assert!(t.matched());
        let (t, r) = t.step(TaskEvent::Footswitch, 900);
        let r = r.unwrap();
        assert_eq!(r.d_cm, 0.0);
        assert_eq!(r.mt_ms, 800);
        assert_eq!(r.t_px, 520.0);
        assert!(r.matched_at_end);
        assert_eq!(t.phase(), TrialPhase::Ended);
        assert_eq!(t.state().plane.pivot, Vec3::ZERO);
    }

    #[test]
    fn error_measured_at_footswitch_not_first_match() {
        let t = ready_trial(TechniqueMode::Pivot, 1.0);
        let (t, _) = t.step(TaskEvent::TouchDown, 0);
        let (t, _) = t.step(TaskEvent::TouchMove { du: 48.0, dv: 0.0 }, 1);
        assert!(t.matched());
        let (t, _) = t.step(TaskEvent::TouchMove { du: 3.0, dv: 0.0 }, 2);
        let (_, r) = t.step(TaskEvent::Footswitch, 3);
        assert!((r.unwrap().d_cm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn travel_accumulates_only_while_down() {
        let t = ready_trial(TechniqueMode::Free, 0.01);
        let (t, _) = t.step(TaskEvent::TouchDown, 0);
        let (t, _) = t.step(TaskEvent::TouchMove { du: 3.0, dv: 4.0 }, 1);
        let (t, _) = t.step(TaskEvent::TouchMove { du: 3.0, dv: 4.0 }, 2);
        let (t, _) = t.step(TaskEvent::TouchUp, 3);
        let (t, _) = t.step(TaskEvent::TouchMove { du: 30.0, dv: 40.0 }, 4);
        assert_eq!(t.travel_px(), 10.0);

        let t = ready_trial(TechniqueMode::Free, 0.01);
        let (t, _) = t.step(TaskEvent::TouchDown, 0);
        let (t, _) = t.step(TaskEvent::TouchUp, 1);
        assert_eq!(t.travel_px(), 0.0);
    }

    #[test]
    fn straight_swipe_telescopes() {
        let mut t = ready_trial(TechniqueMode::Free, 0.01);
        t = t.step(TaskEvent::TouchDown, 0).0;
        for k in 0..10 {
            t = t.step(TaskEvent::TouchMove { du: 6.0, dv: 8.0 }, k + 1).0;
        }
        assert!((t.travel_px() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn engine_walks_plan() {
        let plan = vec![spec(9, 52.0, TechniqueMode::Free), spec(10, 52.0, TechniqueMode::Pivot)];
        let mut e = TaskEngine::new(plan, 0.1, TaskConfig::default()).unwrap();
        let began = e.start().began.unwrap();
        assert_eq!(began.0, 1);
        e.handle(TaskEvent::Orientation(Quat::IDENTITY), 0);
        e.handle(TaskEvent::TouchDown, 10);
        e.handle(TaskEvent::TouchMove { du: 520.0, dv: 0.0 }, 20);
        let step = e.handle(TaskEvent::Footswitch, 30);
        assert!(step.ended.is_some());
        assert!(!e.finished());
        let step = e.handle(TaskEvent::Orientation(Quat::IDENTITY), 40);
        assert_eq!(step.began.unwrap().0, 2);
        assert_eq!(e.current().unwrap().phase(), TrialPhase::Ready);
        assert_eq!(e.state().mode, TechniqueMode::Pivot);
        e.handle(TaskEvent::TouchDown, 50);
        e.handle(TaskEvent::TouchMove { du: -520.0, dv: 0.0 }, 60);
        assert!(e.handle(TaskEvent::Footswitch, 70).ended.is_some());
        assert!(e.finished());
        assert_eq!(e.records().len(), 2);
    }
}
