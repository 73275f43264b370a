use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("input row {row} is not on the unit sphere (norm {norm})")]
    NotUnitNorm { row: usize, norm: f64 },

    #[error("coefficient bound violated: sampled |a*(b)| = {sampled} exceeds gamma = {gamma}")]
    CoefficientBound { sampled: f64, gamma: f64 },

    #[error("eigen solver did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("dynamics diverged at step {step}: risk {risk:e}")]
    Diverged {
        step: usize,
        risk: f64,
        log: Box<crate::dynamics::TrajectoryLog>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("no runs found in {0}")]
    NoRuns(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
