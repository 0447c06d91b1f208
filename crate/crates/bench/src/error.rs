//! Error type for evaluation and attacks.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("preprocessor {0} is not differentiable; pick an analytic proxy")]
    NonDifferentiable(cama_core::PreprocessorKind),

    #[error(transparent)]
    Core(#[from] cama_core::CoreError),

    #[error(transparent)]
    Nn(#[from] cama_nn::NnError),

    #[error(transparent)]
    Train(#[from] cama_train::TrainError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl BenchError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> BenchError {
        BenchError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
