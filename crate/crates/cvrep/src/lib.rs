//! Experiment runner around `cvrep-core`: configuration, parameter
//! searches, sweeps and self-describing result tables.

pub mod config;
pub mod error;
pub mod experiments;
pub mod optimize;
pub mod output;

pub use config::{ConfigOverrides, ExperimentConfig, ExperimentKind};
pub use error::{RunError, RunResult};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "CVREP_WORKERS";
