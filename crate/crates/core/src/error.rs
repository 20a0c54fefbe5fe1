use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("root finding did not bracket a solution: {0}")]
    Convergence(String),

    #[error("orbit is degenerate: {distinct} distinct points (need at least {required})")]
    DegenerateOrbit { distinct: usize, required: usize },

    #[error("grid too coarse for lag {h}: found {found} discontinuities, expected {expected}")]
    Resolution { h: usize, found: usize, expected: usize },

    #[error("lag {0} has no prepared node table")]
    MissingLag(usize),

    #[error("dimension {dim} exceeds the supported limit of {limit}")]
    DimensionCap { dim: usize, limit: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("estimate a = {a_hat} lies outside (0, 1)")]
    InvalidEstimate { a_hat: f64 },

    #[error("refinement did not converge after {iterations} iterations (last step {last_step:e})")]
    NotConverged {
        iterations: usize,
        last_step: f64,
        best: Box<crate::estimator::EstimateReport>,
    },

    #[error("allocation of {0} points failed")]
    Resource(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
