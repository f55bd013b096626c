use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch { expected: usize, got: usize, context: &'static str },

    #[error("covariance is not positive definite ({0})")]
    DegenerateCovariance(String),

    #[error("numerical failure in {method}: achieved error estimate {achieved:e}")]
    NumericalFailure { method: &'static str, achieved: f64 },

    #[error("method not applicable: {0}")]
    MethodInapplicable(&'static str),

    #[error("measurement inconsistent with every component (max log-likelihood {max_log_likelihood})")]
    MeasurementInconsistent { max_log_likelihood: f64 },

    #[error("super-index count {count} exceeds {limit}; set a truncation size")]
    TooManyComponents { count: f64, limit: f64 },

    #[error("autocorrelation undefined for a constant series")]
    UndefinedAutocorrelation,

    #[error("no spacing up to lag {max_lag} keeps |autocorrelation| below {threshold}")]
    SpacingNotFound { threshold: f64, max_lag: usize },

    #[error("json: {0}")]
    Json(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
