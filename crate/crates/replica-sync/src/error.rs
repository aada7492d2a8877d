use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("group {0} is continuous and cannot be enumerated")]
    NotEnumerable(String),

    #[error("unsupported representation: {0}")]
    Unsupported(String),

    #[error("channel {0} has an indeterminate classification; classify it first")]
    ClassificationNeeded(usize),

    #[error("not applicable: {0}")]
    Inapplicable(String),

    #[error("enumeration budget exceeded: {size} configurations > {limit}")]
    BudgetExceeded { size: f64, limit: f64 },

    #[error("internal numerical error: {0}")]
    Numerical(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
