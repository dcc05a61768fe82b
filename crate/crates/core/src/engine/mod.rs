//! Discrete-event simulation of a scenario under one policy.

mod metrics;
mod sim;
pub mod sweep;
mod trace;

use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::forecast::ForecastError;
use crate::orchestrator::Policy;

pub use metrics::{MetricsReport, CATEGORIES};
pub use sim::{origin_load_at, trajectory, Simulation};
pub use trace::{TraceKind, Tracer};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error("invariant breach at t = {t:.6}: {what}\nlast events:\n{tail}")]
    Invariant { t: f64, what: String, tail: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl EngineError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            EngineError::Config(_) | EngineError::Forecast(_) => 2,
            EngineError::Invariant { .. } => 3,
            EngineError::Io(_) => 1,
        }
    }
}

pub fn run(cfg: &ScenarioConfig) -> Result<MetricsReport, EngineError> {
    Simulation::new(cfg, Tracer::none())?.run()
}

pub fn run_traced(cfg: &ScenarioConfig, tracer: Tracer) -> Result<MetricsReport, EngineError> {
    Simulation::new(cfg, tracer)?.run()
}

/// Runs with a caller-supplied policy instead of the configured one.
pub fn run_with_policy(cfg: &ScenarioConfig, policy: Box<dyn Policy>) -> Result<MetricsReport, EngineError> {
    Simulation::with_policy(cfg, policy, Tracer::none())?.run()
}
