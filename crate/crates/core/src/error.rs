use thiserror::Error;

/// Errors raised by the modem, estimators, decoders and the experiment harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("configuration error: {0}")]
    Config(String),

    /// A rotated pilot entry is too close to zero for least-squares division.
    #[error("spectral null at rotated pilot entry {index} (|x| = {magnitude:e})")]
    SpectralNull { index: usize, magnitude: f64 },

    #[error("singular channel matrix (condition number {condition:e})")]
    SingularChannel { condition: f64 },

    #[error("search budget exceeded: {0}")]
    Budget(String),

    #[error("infeasible parameters: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}
