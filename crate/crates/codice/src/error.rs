//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("column '{0}' not found in CSV header")]
    MissingColumn(String),

    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },

    #[error("file contains no data rows")]
    EmptyFile,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("k = {k} exceeds the number of available points ({n})")]
    KTooLarge { k: usize, n: usize },

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("instance already satisfies the desired outcome")]
    AlreadyDesired,

    #[error("no eligible instances for the requested benchmark")]
    NoEligibleInstances,

    #[error("eigensolver failed to converge: {0}")]
    Eigensolver(String),

    #[error("operation requires a {expected} predictor")]
    TaskMismatch { expected: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
