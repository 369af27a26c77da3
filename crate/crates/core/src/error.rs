use thiserror::Error;

/// Errors raised by the precoders, the oracle and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("channel is rank deficient (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("exhaustive search needs R <= {max}, got R = {antennas}")]
    OracleTooLarge { antennas: usize, max: usize },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
