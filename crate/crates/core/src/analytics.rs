//! Trial tables, per-level summaries and one-way repeated-measures ANOVA.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::TechniqueMode;
use crate::task::{Condition, TrialRecord, TrialSpec, POSITIONS, RADII_CM};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("need at least {need} {what}, got {got}")]
    TooSmall { what: &'static str, need: usize, got: usize },
    #[error("ragged matrix: row {row} has {got} levels, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("subject {subject} has no trials at level {level}")]
    MissingCell { subject: String, level: String },
    #[error("non-finite value in matrix")]
    NonFinite,
    #[error("table is empty")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {detail}")]
    BadRow { row: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Factor {
    Technique,
    Radius,
    Condition,
    Position,
}

impl std::str::FromStr for Factor {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "technique" => Ok(Factor::Technique),
            "radius" => Ok(Factor::Radius),
            "condition" => Ok(Factor::Condition),
            "position" => Ok(Factor::Position),
            other => Err(format!("unknown factor {other:?}")),
        }
    }
}

impl Factor {
    /// Every level the design defines, in display order.
    pub fn levels(self) -> Vec<String> {
        match self {
            Factor::Technique => vec!["pivot".into(), "free".into()],
            Factor::Radius => RADII_CM.iter().map(|r| format_radius(*r)).collect(),
            Factor::Condition => vec!["speed".into(), "accuracy".into()],
            Factor::Position => (1..=POSITIONS).map(|p| p.to_string()).collect(),
        }
    }

    pub fn level_of(self, spec: &TrialSpec) -> String {
        match self {
            Factor::Technique => spec.technique.as_str().into(),
            Factor::Radius => format_radius(spec.radius_cm),
            Factor::Condition => spec.condition.as_str().into(),
            Factor::Position => spec.position_idx.to_string(),
        }
    }
}

fn format_radius(r: f64) -> String {
    format!("{r}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Mt,
    D,
    T,
}

impl std::str::FromStr for Measure {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mt" => Ok(Measure::Mt),
            "d" => Ok(Measure::D),
            "t" => Ok(Measure::T),
            other => Err(format!("unknown measure {other:?}")),
        }
    }
}

impl Measure {
    pub fn of(self, r: &TrialRecord) -> f64 {
        match self {
            Measure::Mt => r.mt_ms as f64,
            Measure::D => r.d_cm,
            Measure::T => r.t_px,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Measure::Mt => "ms",
            Measure::D => "cm",
            Measure::T => "px",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub subject_id: String,
    pub record: TrialRecord,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialTable {
    pub rows: Vec<TableRow>,
}

/// CSV layout of a trial summary row.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    trial_id: u32,
    technique: TechniqueMode,
    condition: Condition,
    position_idx: usize,
    radius_cm: f64,
    mt_ms: u64,
    d_cm: f64,
    t_px: f64,
    #[serde(default)]
    subject_id: Option<String>,
}

impl TrialTable {
    pub fn from_records(subject_id: &str, records: &[TrialRecord]) -> Self {
        Self { rows: records.iter().map(|r| TableRow { subject_id: subject_id.to_string(), record: *r }).collect() }
    }

    pub fn extend(&mut self, other: TrialTable) {
        self.rows.extend(other.rows);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subjects(&self) -> Vec<String> {
        let mut s: Vec<String> = self.rows.iter().map(|r| r.subject_id.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AnalyticsError> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            let r = &row.record;
            out.serialize(CsvRow {
                trial_id: r.trial_id,
                technique: r.spec.technique,
                condition: r.spec.condition,
                position_idx: r.spec.position_idx,
                radius_cm: r.spec.radius_cm,
                mt_ms: r.mt_ms,
                d_cm: r.d_cm,
                t_px: r.t_px,
                subject_id: Some(row.subject_id.clone()),
            })?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Read a trial summary. A missing `subject_id` column means one subject.
    /// Timestamps are not part of the summary and read back as zero.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, AnalyticsError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let row = row?;
            if !(1..=POSITIONS).contains(&row.position_idx) {
                return Err(AnalyticsError::BadRow { row: i + 1, detail: format!("position {}", row.position_idx) });
            }
            rows.push(TableRow {
                subject_id: row.subject_id.filter(|s| !s.is_empty()).unwrap_or_else(|| "1".into()),
                record: TrialRecord {
                    trial_id: row.trial_id,
                    spec: TrialSpec {
                        position_idx: row.position_idx,
                        radius_cm: row.radius_cm,
                        technique: row.technique,
                        condition: row.condition,
                    },
                    mt_ms: row.mt_ms,
                    d_cm: row.d_cm,
                    t_px: row.t_px,
                    started_at: 0,
                    ended_at: row.mt_ms,
                    matched_at_end: true,
                },
            });
        }
        Ok(Self { rows })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    pub level: String,
    /// `None` when no subject has trials at this level.
    pub mean: Option<f64>,
    pub subjects: usize,
    pub trials: usize,
}

/// Per-subject level means: subject -> level -> (sum, count).
fn subject_cells(
    table: &TrialTable,
    factor: Factor,
    measure: Measure,
) -> BTreeMap<String, BTreeMap<String, (f64, usize)>> {
    let mut cells: BTreeMap<String, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    for row in &table.rows {
        let e = cells
            .entry(row.subject_id.clone())
            .or_default()
            .entry(factor.level_of(&row.record.spec))
            .or_insert((0.0, 0));
        e.0 += measure.of(&row.record);
        e.1 += 1;
    }
    cells
}

/// Mean of `measure` at each level of `factor`, averaging within each
/// subject first and then across subjects.
pub fn summarize(table: &TrialTable, factor: Factor, measure: Measure) -> Result<Vec<LevelSummary>, AnalyticsError> {
    if table.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let cells = subject_cells(table, factor, measure);
    Ok(factor
        .levels()
        .into_iter()
        .map(|level| {
            let per_subject: Vec<(f64, usize)> =
                cells.values().filter_map(|levels| levels.get(&level)).map(|&(sum, n)| (sum / n as f64, n)).collect();
            let subjects = per_subject.len();
            LevelSummary {
                mean: (subjects > 0).then(|| per_subject.iter().map(|p| p.0).sum::<f64>() / subjects as f64),
                subjects,
                trials: per_subject.iter().map(|p| p.1).sum(),
                level,
            }
        })
        .collect())
}

/// Subjects × levels matrix of per-subject means, for the levels present in
/// the table. Every subject must have every level.
pub fn cell_matrix(
    table: &TrialTable,
    factor: Factor,
    measure: Measure,
) -> Result<(Vec<String>, Vec<Vec<f64>>), AnalyticsError> {
    let cells = subject_cells(table, factor, measure);
    let levels: Vec<String> =
        factor.levels().into_iter().filter(|l| cells.values().any(|s| s.contains_key(l))).collect();
    let mut matrix = Vec::with_capacity(cells.len());
    for (subject, by_level) in &cells {
        let row = levels
            .iter()
            .map(|l| {
                by_level
                    .get(l)
                    .map(|&(sum, n)| sum / n as f64)
                    .ok_or_else(|| AnalyticsError::MissingCell { subject: subject.clone(), level: l.clone() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        matrix.push(row);
    }
    Ok((levels, matrix))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaResult {
    pub f: f64,
    pub df1: usize,
    pub df2: usize,
    pub p: f64,
}

/// One-way repeated-measures ANOVA on an `n_subjects × k_levels` matrix of
/// per-subject level means. No sphericity correction is applied.
pub fn rm_anova_oneway(matrix: &[Vec<f64>]) -> Result<AnovaResult, AnalyticsError> {
    let n = matrix.len();
    if n < 2 {
        return Err(AnalyticsError::TooSmall { what: "subjects", need: 2, got: n });
    }
    let k = matrix[0].len();
    if k < 2 {
        return Err(AnalyticsError::TooSmall { what: "levels", need: 2, got: k });
    }
    for (row, r) in matrix.iter().enumerate() {
        if r.len() != k {
            return Err(AnalyticsError::Ragged { row, got: r.len(), expected: k });
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(AnalyticsError::NonFinite);
        }
    }

    let (nf, kf) = (n as f64, k as f64);
    let subject_means: Vec<f64> = matrix.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let level_means: Vec<f64> = (0..k).map(|j| matrix.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let grand = level_means.iter().sum::<f64>() / kf;

    let ss_treatment = nf * level_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_error: f64 = matrix
        .iter()
        .zip(&subject_means)
        .map(|(r, si)| r.iter().zip(&level_means).map(|(x, lj)| (x - si - lj + grand).powi(2)).sum::<f64>())
        .sum();
    let ss_total: f64 = matrix.iter().flatten().map(|x| (x - grand).powi(2)).sum();

    let df1 = k - 1;
    let df2 = (k - 1) * (n - 1);
    // Residual sums at rounding level are zero.
    let floor = ss_total * 1e-24;
    let ss_treatment = if ss_treatment <= floor { 0.0 } else { ss_treatment };
    let ss_error = if ss_error <= floor { 0.0 } else { ss_error };

    let ms_treatment = ss_treatment / df1 as f64;
    let ms_error = ss_error / df2 as f64;
    let (f, p) = match (ms_treatment > 0.0, ms_error > 0.0) {
        (false, _) => (0.0, 1.0),
        (true, false) => (f64::INFINITY, 0.0),
        (true, true) => {
            let f = ms_treatment / ms_error;
            (f, (1.0 - f_cdf(f, df1 as f64, df2 as f64)).clamp(0.0, 1.0))
        }
    };
    Ok(AnovaResult { f, df1, df2, p })
}

/// CDF of the F distribution with `(df1, df2)` degrees of freedom.
pub fn f_cdf(x: f64, df1: f64, df2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let z = df1 * x / (df1 * x + df2);
    statrs::function::beta::beta_reg(df1 / 2.0, df2 / 2.0, z)
}
