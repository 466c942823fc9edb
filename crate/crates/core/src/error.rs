use thiserror::Error;

/// Errors raised by the kernels, geometry, preconditioners and solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric positive definite (nonpositive pivot {pivot} at index {index})")]
    NotSpd { index: usize, pivot: f64 },

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("tangent vector belongs to a different base point")]
    BasePointMismatch,

    #[error("metric mismatch between operands")]
    MetricMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("loss of positive definiteness: {0}")]
    Indefinite(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
