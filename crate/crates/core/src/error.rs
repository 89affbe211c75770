use thiserror::Error;

/// Errors raised by the transforms, dropout operators and training harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SwdError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("spatial size too small: {0}")]
    TooSmall(String),
    #[error("mask record does not match config: {0}")]
    RecordMismatch(String),
    #[error("malformed data: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, SwdError>;
