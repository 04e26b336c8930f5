use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rank deficient at column {column}")]
    RankDeficient { column: usize },

    #[error("bidiagonalization breakdown after {step} steps")]
    Breakdown { step: usize },

    #[error("stacked projected system is singular")]
    SingularSystem,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("bad point spread function: {0}")]
    BadPsf(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
