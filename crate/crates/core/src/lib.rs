//! Deterministic discrete-event simulator for clustered wireless sensor network routing.

pub mod adversary;
pub mod baselines;
pub mod engine;
pub mod error;
pub mod esrpsdc;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod radio;
pub mod scenario;
pub mod topology;
pub mod traffic;

pub use error::{Error, Result};
