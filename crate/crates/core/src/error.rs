//! Crate-wide error type.

/// Errors produced by mesh validation, material checks, flattening and the
/// equilibrium solver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("degenerate element {id}: {reason}")]
    DegenerateElement { id: usize, reason: String },

    #[error("material error: {0}")]
    Material(String),

    #[error("flattening failed: {0}")]
    Flattening(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn degenerate(id: usize, reason: impl Into<String>) -> Self {
        Error::DegenerateElement {
            id,
            reason: reason.into(),
        }
    }
}
