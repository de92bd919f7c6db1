//! Host server and command implementations behind the `planecast` binary.

pub mod commands;
pub mod server;
