use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or invalid input data.
    #[error("data error: {0}")]
    Data(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A parameter outside its admissible range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("correlation matrix is not positive semidefinite (pivot {pivot} = {value:e})")]
    NotPositiveSemidefinite { pivot: usize, value: f64 },

    /// A computation that could not produce a finite answer.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("method {method} cannot analyse a {endpoint} endpoint")]
    MethodMismatch { method: String, endpoint: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
