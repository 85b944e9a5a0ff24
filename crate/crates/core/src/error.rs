use thiserror::Error;

/// Errors raised by the library. CLI maps every variant to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite state produced at step {step}")]
    NonFiniteState { step: usize },

    #[error("zero pivot during tridiagonal elimination at row {row}")]
    ZeroPivot { row: usize },

    #[error("density is not integrable on the truncation window: {0}")]
    NonIntegrable(String),

    #[error("all samples fall outside the histogram grid")]
    EmptyHistogram,

    #[error("missing derivative data: {0}")]
    MissingDerivatives(&'static str),

    #[error("degenerate limit: {0}")]
    Degenerate(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
