use thiserror::Error;

use crate::lattice::{Direction, LatticePoint};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no occupied site within {max_scan} steps of {from} in direction {direction}")]
    ScanExceeded {
        from: LatticePoint,
        direction: Direction,
        max_scan: u64,
    },

    #[error("probability mass drifted to {total} after step {step}")]
    MassLeak { step: usize, total: f64 },

    #[error("reachable support of {sites} sites exceeds the budget of {budget}")]
    MemoryBudgetExceeded { sites: usize, budget: usize },

    #[error("window radius {radius} too small for {requested} cutsets")]
    WindowTooSmall { radius: i64, requested: i64 },

    #[error("resolvent solve did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("trajectory left the torus graph at step {step}")]
    LeftWindow { step: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("check `{check}` failed at index {index}")]
    ReportFailure { check: String, index: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
