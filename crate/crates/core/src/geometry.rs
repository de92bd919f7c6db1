//! Plane-Casting kinematics.
//!
//! The device orientation defines a constraint plane; touch gestures slide
//! the cursor within it. In pivot mode the plane rotates about a fixed point
//! (the world origin) and carries the cursor with it. In free mode the plane
//! is pinned to the cursor, so rotating the device only re-aims the plane.
//!
//! Every operation takes a state by reference and returns a new one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Quat, Vec3};

/// Norm slack accepted on an incoming orientation before it is rejected.
pub const UNIT_TOLERANCE: f64 = 1e-3;

/// World width of the plane rectangle drawn in the scene.
pub const DEFAULT_RECT_WIDTH_CM: f64 = 40.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("orientation is not a unit quaternion (norm {0})")]
    NonUnitQuaternion(f64),
    #[error("non-finite touch delta ({du}, {dv})")]
    NonFiniteTouch { du: f64, dv: f64 },
    #[error("gain must be positive and finite, got {0}")]
    InvalidGain(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TechniqueMode {
    Pivot,
    Free,
}

impl TechniqueMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TechniqueMode::Pivot => "pivot",
            TechniqueMode::Free => "free",
        }
    }

    pub fn other(self) -> Self {
        match self {
            TechniqueMode::Pivot => TechniqueMode::Free,
            TechniqueMode::Free => TechniqueMode::Pivot,
        }
    }
}

impl std::fmt::Display for TechniqueMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TechniqueMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pivot" | "pivotpc" => Ok(TechniqueMode::Pivot),
            "free" | "freepc" => Ok(TechniqueMode::Free),
            other => Err(format!("unknown technique {other:?}")),
        }
    }
}

/// Constraint plane: a pivot plus an orthonormal in-plane basis.
/// `e1` is the screen-right direction, `e2` the screen-top direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub pivot: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
}

impl Plane {
    /// Horizontal plane through the origin (device flat, top pointing away).
    pub const REFERENCE: Plane = Plane { pivot: Vec3::ZERO, e1: Vec3::X, e2: Vec3::new(0.0, 0.0, -1.0) };

    pub fn normal(&self) -> Vec3 {
        self.e1.cross(self.e2)
    }

    pub fn point_at(&self, u: f64, v: f64) -> Vec3 {
        self.pivot + self.e1 * u + self.e2 * v
    }
}

/// Map a device orientation (relative to the calibrated flat pose) to the
/// plane's in-plane basis: screen-right is the device X axis, screen-top the
/// device's forward axis, which points along −Z at the reference pose.
pub fn device_to_plane_basis(q: Quat) -> Result<(Vec3, Vec3), GeometryError> {
    let q = q.to_unit(UNIT_TOLERANCE).ok_or(GeometryError::NonUnitQuaternion(q.norm()))?;
    Ok((q.rotate(Vec3::X), q.rotate(Vec3::new(0.0, 0.0, -1.0))))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanecastState {
    pub mode: TechniqueMode,
    pub plane: Plane,
    pub cursor: Vec3,
    /// Cursor in plane coordinates (cm). Always (0, 0) in free mode.
    pub uv: (f64, f64),
    /// Touch-to-world scale, cm per pixel.
    pub gain: f64,
}

impl PlanecastState {
    /// Reference pose with the cursor at the origin.
    pub fn new(mode: TechniqueMode, gain: f64) -> Result<Self, GeometryError> {
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(GeometryError::InvalidGain(gain));
        }
        Ok(Self { mode, plane: Plane::REFERENCE, cursor: Vec3::ZERO, uv: (0.0, 0.0), gain })
    }

    /// Gain that makes one full-width swipe cross the plane rectangle.
    pub fn default_gain(screen_w_px: u32) -> f64 {
        DEFAULT_RECT_WIDTH_CM / f64::from(screen_w_px.max(1))
    }

    /// Re-aim the plane from a new device orientation.
    pub fn apply_rotation(&self, q: Quat) -> Result<Self, GeometryError> {
        let (e1, e2) = device_to_plane_basis(q)?;
        let mut next = *self;
        next.plane.e1 = e1;
        next.plane.e2 = e2;
        if self.mode == TechniqueMode::Pivot {
            next.cursor = next.plane.point_at(self.uv.0, self.uv.1);
        }
        Ok(next)
    }

    /// Slide the cursor by a touch delta in screen pixels (`du` rightward,
    /// `dv` downward on the screen).
    pub fn apply_touch(&self, du: f64, dv: f64) -> Result<Self, GeometryError> {
        if !(du.is_finite() && dv.is_finite()) {
            return Err(GeometryError::NonFiniteTouch { du, dv });
        }
        if du == 0.0 && dv == 0.0 {
            return Ok(*self);
        }
        let mut next = *self;
        match self.mode {
            TechniqueMode::Pivot => {
                next.uv = (self.uv.0 + self.gain * du, self.uv.1 - self.gain * dv);
                next.cursor = next.plane.point_at(next.uv.0, next.uv.1);
            }
            TechniqueMode::Free => {
                let delta = self.plane.e1 * (self.gain * du) - self.plane.e2 * (self.gain * dv);
                next.cursor = self.cursor + delta;
                next.plane.pivot = next.cursor;
            }
        }
        Ok(next)
    }

    /// Cursor displacement per radian of plane rotation (the lever arm).
    pub fn rotation_sensitivity(&self) -> f64 {
        match self.mode {
            TechniqueMode::Pivot => self.uv.0.hypot(self.uv.1),
            TechniqueMode::Free => 0.0,
        }
    }

    /// Put the cursor back at the origin with the pivot there too, keeping
    /// the current plane orientation.
    pub fn recentered(&self) -> Self {
        let mut next = *self;
        next.plane.pivot = Vec3::ZERO;
        next.cursor = Vec3::ZERO;
        next.uv = (0.0, 0.0);
        next
    }

    /// Same plane orientation under another technique, cursor at the origin.
    pub fn with_mode(&self, mode: TechniqueMode) -> Self {
        let mut next = self.recentered();
        next.mode = mode;
        next
    }
}
