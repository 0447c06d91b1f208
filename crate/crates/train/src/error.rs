//! Error type spanning all training phases.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite values detected in {phase} at step {step}; aborting")]
    NonFinite { phase: &'static str, step: u64 },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] cama_core::CoreError),

    #[error(transparent)]
    Nn(#[from] cama_nn::NnError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl TrainError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> TrainError {
        TrainError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;
