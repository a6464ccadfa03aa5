use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected n={expected}, got n={got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("estimation unavailable: {0}")]
    EstimationUnavailable(String),

    #[error("amplitude scan failed (cap {cap:e}): {reason}")]
    ScanFailed { cap: f64, reason: String },

    #[error("unknown case `{0}`")]
    UnknownCase(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
