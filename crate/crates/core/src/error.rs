use std::path::PathBuf;

use thiserror::Error;

use crate::harness::config::ConfigError;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Hadamard order {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("{subsets} column subsets exceed the enumeration budget of {budget}")]
    EnumerationBudget { subsets: u128, budget: u128 },

    #[error("no threshold reaches recall >= {required} (best recall {best})")]
    RecallConstraintUnmet { required: f64, best: f64 },

    #[error("malformed triplet data at line {line}: {msg}")]
    Triplet { line: usize, msg: String },

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
