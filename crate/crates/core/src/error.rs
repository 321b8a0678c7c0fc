use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// A predicted parameter left its domain at a specific observation.
    #[error("domain error at t={timestamp}: {message}")]
    DomainAt { timestamp: f64, message: String },

    #[error("coefficient layout mismatch: expected {expected}, got {actual}")]
    LayoutMismatch { expected: usize, actual: usize },

    #[error("invalid model structure: {0}")]
    Structure(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
