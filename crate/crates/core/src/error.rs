use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at row {row}, column {column} ({name})")]
    NonFinite { row: usize, column: usize, name: String },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("singular matrix (smallest eigenvalue {min_eigenvalue:e}): {context}")]
    Singular { context: String, min_eigenvalue: f64 },

    #[error("zero initial coefficient at index {index}: {hint}")]
    ZeroInitial { index: usize, hint: String },

    #[error(
        "solver did not converge after {iterations} sweeps (kkt residual {kkt_residual:e})"
    )]
    NotConverged {
        iterations: usize,
        kkt_residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("no root found: {0}")]
    NoRoot(String),

    #[error("series divergence: {0}")]
    Divergence(String),

    #[error("degenerate quantity: {0}")]
    Degenerate(String),

    #[error("too many failures: {failed} of {total} ({context})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        context: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
