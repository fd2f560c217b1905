use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    /// Malformed input, with the 1-based line number where it was detected.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no sentences")]
    NoSentences,

    #[error("ladder exhausted: corpus uses a single tag")]
    LadderExhausted,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("embedding vocabulary covers {coverage:.4} of annotated tokens (need {required:.2})")]
    Coverage { coverage: f64, required: f64 },

    #[error("invalid world: {0}")]
    InvalidWorld(String),

    #[error("degenerate regressor")]
    DegenerateRegressor,

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
