use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate sigma-point scaling: L + lambda = {0}")]
    DegenerateScaling(f64),

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("cholesky factorization of {what} failed after jitter {max_jitter:e}")]
    CholeskyFailed { what: &'static str, max_jitter: f64 },

    #[error("linear solve with the innovation covariance failed")]
    SingularInnovation,

    #[error("time {t} outside trajectory range [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("history holds {have} of {need} records")]
    HistoryNotFull { have: usize, need: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("stream format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
