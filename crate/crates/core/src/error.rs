use thiserror::Error;

/// Error type shared across the crate.
#[derive(Error, Debug)]
pub enum AdiError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Dataset generation exhausted its retry budget.
    #[error("generation failure: {reason} (attempts: {attempts}, accepted: {accepted})")]
    GenerationFailure {
        reason: String,
        attempts: usize,
        accepted: usize,
    },

    /// A stored artifact failed its content-hash check.
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AdiError>;

pub(crate) fn invalid(msg: impl Into<String>) -> AdiError {
    AdiError::InvalidArgument(msg.into())
}
