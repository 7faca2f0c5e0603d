//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file (bad header, wrong column count, unparseable value).
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Data that parses but violates a precondition (negative count, missing
    /// sample, non-finite expression value, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Constant covariate column or rank-deficient confounder block.
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    /// Too few samples for the number of covariates (need n >= p + 2).
    #[error("insufficient replication: {0}")]
    InsufficientReplication(String),

    /// Out-of-range solver/simulation configuration. Maps to a usage error at
    /// the CLI level.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A DE detector (built-in or external subprocess) failed to produce scores.
    #[error("detector '{name}' failed: {message}")]
    Detector { name: String, message: String },
}

impl Error {
    pub fn parse(path: &std::path::Path, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }
}
