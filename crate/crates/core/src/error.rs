use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{path}: row {row}: {message}")]
    Ingestion { path: PathBuf, row: usize, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("all labels belong to a single class")]
    SingleClass,

    #[error("targets are constant")]
    ConstantTarget,

    #[error("singular linear system")]
    Singular,

    #[error("weighted norm is zero")]
    DegenerateNorm,

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("corrupt model payload: {0}")]
    CorruptPayload(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
