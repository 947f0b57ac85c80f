use thiserror::Error;

/// Errors raised by the model, samplers and Gibbs engine.
#[derive(Debug, Error)]
pub enum BtfError {
    #[error("duplicate observation at (row {0}, col {1}, dose {2}, replicate {3})")]
    DuplicateKey(usize, usize, usize, usize),

    #[error("non-finite value {value} at {location}")]
    NonFinite { value: f64, location: String },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix `{name}` is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite {
        name: String,
        pivot: usize,
        value: f64,
    },

    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    #[error("missing coverage: {0}")]
    Coverage(String),

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = BtfError> = std::result::Result<T, E>;
