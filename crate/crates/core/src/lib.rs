//! Plane-Casting 3D cursor control.
//!
//! A phone's orientation defines a plane in the scene and touch gestures
//! move a cursor within it. This crate holds the kinematics for the pivot
//! and free variants, the orientation filter, the wire protocol and host
//! session, the docking-task harness, trial statistics, and a scripted
//! user that runs whole sessions headlessly.

pub mod analytics;
pub mod exec;
pub mod filter;
pub mod geometry;
pub mod math;
pub mod protocol;
pub mod session;
pub mod sim;
pub mod task;

pub use exec::ExecMode;
pub use geometry::{device_to_plane_basis, Plane, PlanecastState, TechniqueMode};
pub use math::{Quat, Vec3};
pub use protocol::{decode, encode, WireMessage};
pub use session::{Session, SessionConfig};
