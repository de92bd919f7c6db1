//! Session plans: the ordered list of trials one subject performs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::TechniqueMode;

use super::layout::{POSITIONS, RADII_CM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Speed,
    Accuracy,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Speed => "speed",
            Condition::Accuracy => "accuracy",
        }
    }

    fn other(self) -> Self {
        match self {
            Condition::Speed => Condition::Accuracy,
            Condition::Accuracy => Condition::Speed,
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "speed" => Ok(Condition::Speed),
            "accuracy" => Ok(Condition::Accuracy),
            other => Err(format!("unknown condition {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TechniqueOrder {
    PivotFirst,
    FreeFirst,
}

impl TechniqueOrder {
    pub fn starting_with(first: TechniqueMode) -> Self {
        match first {
            TechniqueMode::Pivot => TechniqueOrder::PivotFirst,
            TechniqueMode::Free => TechniqueOrder::FreeFirst,
        }
    }

    pub fn techniques(self) -> [TechniqueMode; 2] {
        match self {
            TechniqueOrder::PivotFirst => [TechniqueMode::Pivot, TechniqueMode::Free],
            TechniqueOrder::FreeFirst => [TechniqueMode::Free, TechniqueMode::Pivot],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub position_idx: usize,
    pub radius_cm: f64,
    pub technique: TechniqueMode,
    pub condition: Condition,
}

pub const TRIALS_PER_SESSION: usize = POSITIONS * RADII_CM.len() * 2 * 2;

/// Build the 96-trial plan for one subject.
///
/// Techniques are blocked in the given order. Inside a block the two
/// conditions alternate trial by trial; the first block opens with Speed and
/// the second with Accuracy. Each condition visits the 24 position/radius
/// cells in its own seeded random order.
pub fn make_session_plan(seed: u64, order: TechniqueOrder) -> Vec<TrialSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells: Vec<(usize, f64)> = (1..=POSITIONS).flat_map(|p| RADII_CM.iter().map(move |&r| (p, r))).collect();

    let mut plan = Vec::with_capacity(TRIALS_PER_SESSION);
    let mut lead = Condition::Speed;
    for technique in order.techniques() {
        let mut first = cells.clone();
        let mut second = cells.clone();
        first.shuffle(&mut rng);
        second.shuffle(&mut rng);
        for (a, b) in first.into_iter().zip(second) {
            for ((position_idx, radius_cm), condition) in [(a, lead), (b, lead.other())] {
                plan.push(TrialSpec { position_idx, radius_cm, technique, condition });
            }
        }
        lead = lead.other();
    }
    plan
}
