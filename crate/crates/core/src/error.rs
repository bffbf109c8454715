use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid perturbation spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("dimension {dim} out of range (d = {d})")]
    DimensionOutOfRange { dim: usize, d: usize },

    #[error("dimension {0} is a fallback dimension and carries no peeked values")]
    FallbackDimension(usize),

    #[error("cannot convert non-finite value {0} to an index")]
    NonFiniteIndex(f64),

    #[error("enumeration of {cells} perturbation vectors exceeds the budget of {budget}")]
    EnumerationBudget { cells: u128, budget: u128 },

    #[error("non-finite gradient entry at dimension {0}")]
    NonFiniteGradient(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model evaluation failed: {0}")]
    Model(String),

    #[error("timer resolution too coarse: {0}")]
    TimerResolution(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
