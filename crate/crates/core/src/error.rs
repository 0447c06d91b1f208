//! Error types shared across the image-domain primitives.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("image dimensions {h}x{w} must be even for CFA operations")]
    OddDimensions { h: usize, w: usize },

    #[error("image {h}x{w} too small: {reason}")]
    TooSmall { h: usize, w: usize, reason: String },

    #[error("pixel values must lie in [0,1]; found {value}")]
    OutOfRange { value: f64 },

    #[error("label {label} out of range 1..={max}")]
    LabelOutOfRange { label: u32, max: u32 },

    #[error("dihedral index {0} out of range 0..=7")]
    DihedralIndex(u8),

    #[error("grayscale or non-RGB input rejected: {0}")]
    NotRgb(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("class {label} has no images in split {split}")]
    EmptyClass { label: u32, split: String },

    #[error("manifest entry refers to missing file {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),

    #[error("manifest parse error: {0}")]
    Manifest(String),
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
