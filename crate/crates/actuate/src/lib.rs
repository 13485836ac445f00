//! File formats, trace replay, metrics and tooling around [`actuate_core`].
//!
//! The pipeline is: raw smart-home event logs ([`casas`]) plus a
//! [`sensor_map`] become a time-indexed [`contexts`] stream and a request
//! [`trace`]; [`harness`] replays a trace through a decider with a
//! simulated user and [`metrics`] summarizes the outcome. [`scenario`]
//! generates synthetic traces.

pub mod casas;
pub mod config;
pub mod contexts;
mod error;
pub mod harness;
pub mod latency;
pub mod metrics;
pub mod persist;
pub mod repl;
pub mod run;
pub mod scenario;
pub mod sensor_map;
pub mod timefmt;
pub mod trace;

pub use error::{Error, Result};
