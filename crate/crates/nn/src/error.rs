//! Error type for model serialization and state transfer.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("not a checkpoint file (bad magic)")]
    BadMagic,

    #[error("checkpoint version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("malformed checkpoint: {0}")]
    Format(String),

    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),

    #[error("state mismatch: {0}")]
    StateMismatch(String),
}

impl NnError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> NnError {
        NnError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, NnError>;
