//! Orientation smoothing and reference-pose handling.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::math::Quat;

pub const DEFAULT_WINDOW: usize = 30;
/// 2% of the maximum angular distance of 180 degrees.
pub const DEFAULT_MT_THRESHOLD_DEG: f64 = 3.6;
pub const DEFAULT_RESET_TOLERANCE_DEG: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub filter_window: usize,
    pub mt_threshold_deg: f64,
    pub reset_tolerance_deg: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            filter_window: DEFAULT_WINDOW,
            mt_threshold_deg: DEFAULT_MT_THRESHOLD_DEG,
            reset_tolerance_deg: DEFAULT_RESET_TOLERANCE_DEG,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationSample {
    /// Sender clock, ms.
    pub t: u64,
    pub q: Quat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOutput {
    pub q: Quat,
    /// The window mean vanished and the newest sample was passed through.
    pub degenerate: bool,
}

/// Sliding-window quaternion mean.
///
/// Samples are sign-aligned to the head of the window before averaging so
/// that `q` and `-q` do not cancel.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationFilter {
    window: VecDeque<Quat>,
    window_len: usize,
    reference: Quat,
    last: Option<Quat>,
}

impl Default for OrientationFilter {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW)
    }
}

impl OrientationFilter {
    /// `window_len` of zero is treated as one (no smoothing).
    pub fn new(window_len: usize) -> Self {
        let window_len = window_len.max(1);
        Self { window: VecDeque::with_capacity(window_len), window_len, reference: Quat::IDENTITY, last: None }
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &Quat> {
        self.window.iter()
    }

    pub fn reference(&self) -> Quat {
        self.reference
    }

    /// Most recent filter output.
    pub fn last_output(&self) -> Option<Quat> {
        self.last
    }

    pub fn push(&mut self, sample: OrientationSample) -> FilterOutput {
        let mut q = if (sample.q.norm() - 1.0).abs() <= 4.0 * f64::EPSILON {
            sample.q
        } else {
            sample.q.normalized().unwrap_or(Quat::IDENTITY)
        };
        if let Some(head) = self.window.front() {
            if head.dot(q) < 0.0 {
                q = -q;
            }
        }
        self.window.push_back(q);
        if self.window.len() > self.window_len {
            self.window.pop_front();
            // Keep every entry on the new head's hemisphere.
            let head = self.window[0];
            for entry in self.window.iter_mut().skip(1) {
                if head.dot(*entry) < 0.0 {
                    *entry = -*entry;
                }
            }
        }

        if self.window.iter().all(|s| *s == q) {
            self.last = Some(q);
            return FilterOutput { q, degenerate: false };
        }

        let sum = self.window.iter().fold(Quat::from_components(0.0, 0.0, 0.0, 0.0), |acc, s| {
            Quat::from_components(acc.w + s.w, acc.x + s.x, acc.y + s.y, acc.z + s.z)
        });
        let mean = sum.scale(1.0 / self.window.len() as f64);
        let out = match mean.normalized() {
            Some(m) if mean.norm() > 1e-9 => FilterOutput { q: m, degenerate: false },
            _ => {
                log::warn!("orientation window mean vanished at t={}", sample.t);
                FilterOutput { q: *self.window.back().unwrap(), degenerate: true }
            }
        };
        self.last = Some(out.q);
        out
    }

    /// Last write wins.
    pub fn calibrate_reference(&mut self, q: Quat) {
        self.reference = q.normalized().unwrap_or(Quat::IDENTITY);
    }

    /// Orientation of `q` relative to the calibrated reference pose.
    pub fn relative(&self, q: Quat) -> Quat {
        self.reference.conjugate() * q
    }

    pub fn clear(&mut self) {
        self.window.clear();
        self.last = None;
    }
}

/// Rotation angle between two orientations in degrees, in [0, 180].
/// Antipodal quaternions are the same rotation and have distance 0.
///
/// Equal to `2 acos(|a.b|)`; evaluated through the chord lengths, which stays
/// accurate near zero where `acos` loses half its digits.
pub fn angular_distance(a: Quat, b: Quat) -> f64 {
    let b = if a.dot(b) < 0.0 { -b } else { b };
    let diff = Quat::from_components(a.w - b.w, a.x - b.x, a.y - b.y, a.z - b.z).norm();
    let sum = Quat::from_components(a.w + b.w, a.x + b.x, a.y + b.y, a.z + b.z).norm();
    (4.0 * diff.atan2(sum)).to_degrees().clamp(0.0, 180.0)
}

/// Movement-time start test against the default threshold.
pub fn mt_threshold_crossed(q_start: Quat, q_now: Quat) -> bool {
    crossed(q_start, q_now, DEFAULT_MT_THRESHOLD_DEG)
}

pub fn crossed(q_start: Quat, q_now: Quat, threshold_deg: f64) -> bool {
    angular_distance(q_start, q_now) >= threshold_deg
}
