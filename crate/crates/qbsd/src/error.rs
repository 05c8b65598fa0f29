//! Crate-wide error type.

/// Errors produced by estimation, simulation, evaluation, and file handling.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter or argument is outside its admissible domain.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// An optimizer failed to produce a usable fit.
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// A simulated path left the representable range.
    #[error("simulation failed: {0}")]
    Simulation(String),

    /// A data or config file could not be parsed. `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn estimation(msg: impl Into<String>) -> Self {
        Error::Estimation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
