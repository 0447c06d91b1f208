//! Forensic preprocessors: residual extractors and the frequency split.

pub mod fd;
pub mod hp;
pub mod wavelet;
pub mod ww;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read as _, Write as _};
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::image::Image;

pub use fd::fd_residual;
pub use hp::hp_residual;
pub use ww::{WW_SIGMA0, ww_residual};

/// Input transform applied before a target classifier.
///
/// `Cc` is an identity here: the constrained convolution is a *trainable*
/// layer prepended by the classifier builder, not a fixed preprocessing step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessorKind {
    Rgb,
    RgbFd,
    Fd,
    Ww,
    Cc,
    Hp,
}

impl PreprocessorKind {
    pub const ALL: [PreprocessorKind; 6] = [
        PreprocessorKind::Rgb,
        PreprocessorKind::RgbFd,
        PreprocessorKind::Fd,
        PreprocessorKind::Ww,
        PreprocessorKind::Cc,
        PreprocessorKind::Hp,
    ];

    /// Channel count handed to the downstream classifier.
    pub fn channels(self) -> usize {
        match self {
            PreprocessorKind::RgbFd => 6,
            _ => 3,
        }
    }

    /// True when the classifier builder should prepend a trainable
    /// constrained-convolution layer.
    pub fn wants_constrained_layer(self) -> bool {
        self == PreprocessorKind::Cc
    }
}

impl std::fmt::Display for PreprocessorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PreprocessorKind::Rgb => "rgb",
            PreprocessorKind::RgbFd => "rgb_fd",
            PreprocessorKind::Fd => "fd",
            PreprocessorKind::Ww => "ww",
            PreprocessorKind::Cc => "cc",
            PreprocessorKind::Hp => "hp",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for PreprocessorKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(PreprocessorKind::Rgb),
            "rgb_fd" | "rgb+fd" | "rgbfd" => Ok(PreprocessorKind::RgbFd),
            "fd" => Ok(PreprocessorKind::Fd),
            "ww" => Ok(PreprocessorKind::Ww),
            "cc" => Ok(PreprocessorKind::Cc),
            "hp" => Ok(PreprocessorKind::Hp),
            other => Err(CoreError::InvalidParameter(format!(
                "unknown preprocessor '{other}' (expected rgb|rgb_fd|fd|ww|cc|hp)"
            ))),
        }
    }
}

/// Applies the named preprocessor; output has `kind.channels()` channels.
pub fn apply_preprocessor(kind: PreprocessorKind, img: &Image) -> Result<Array3<f64>> {
    match kind {
        PreprocessorKind::Rgb | PreprocessorKind::Cc => Ok(img.pixels.clone()),
        PreprocessorKind::Fd => fd_residual(img),
        PreprocessorKind::Hp => Ok(hp_residual(img)),
        PreprocessorKind::Ww => ww_residual(img, WW_SIGMA0),
        PreprocessorKind::RgbFd => {
            let fd = fd_residual(img)?;
            let (h, w) = img.dims();
            let mut out = Array3::<f64>::zeros((h, w, 6));
            for i in 0..h {
                for j in 0..w {
                    for c in 0..3 {
                        out[(i, j, c)] = img.pixels[(i, j, c)];
                        out[(i, j, c + 3)] = fd[(i, j, c)];
                    }
                }
            }
            Ok(out)
        }
    }
}

/// High/low frequency decomposition of an image.
#[derive(Debug, Clone)]
pub struct FrequencyPair {
    pub high: Array3<f64>,
    pub low: Array3<f64>,
}

/// Splits `img` into `high = residual_fn(img)` and `low = img − high`.
/// The invariant `high + low == img` holds to one rounding of the
/// subtraction per element.
pub fn frequency_split<F>(img: &Image, residual_fn: F) -> Result<FrequencyPair>
where
    F: FnOnce(&Image) -> Result<Array3<f64>>,
{
    let high = residual_fn(img)?;
    if high.dim() != img.pixels.dim() {
        return Err(CoreError::ShapeMismatch {
            expected: format!("{:?}", img.pixels.dim()),
            got: format!("{:?}", high.dim()),
        });
    }
    let low = &img.pixels - &high;
    Ok(FrequencyPair { high, low })
}

/// Dumps a residual array as little-endian binary: `H`, `W`, `C` as `i32`,
/// then the values as `f32` in row-major (H, W, C) order.
pub fn write_f32_planes(path: &Path, arr: &Array3<f64>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| CoreError::io(path, e))?);
    let (h, w, c) = arr.dim();
    for dim in [h, w, c] {
        f.write_all(&(dim as i32).to_le_bytes())
            .map_err(|e| CoreError::io(path, e))?;
    }
    for v in arr.iter() {
        f.write_all(&(*v as f32).to_le_bytes())
            .map_err(|e| CoreError::io(path, e))?;
    }
    f.flush().map_err(|e| CoreError::io(path, e))
}

/// Reads the format written by [`write_f32_planes`].
pub fn read_f32_planes(path: &Path) -> Result<Array3<f64>> {
    let mut f = BufReader::new(File::open(path).map_err(|e| CoreError::io(path, e))?);
    let mut word = [0u8; 4];
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        f.read_exact(&mut word).map_err(|e| CoreError::io(path, e))?;
        let v = i32::from_le_bytes(word);
        if v <= 0 {
            return Err(CoreError::Manifest(format!(
                "bad dimension {v} in {}",
                path.display()
            )));
        }
        *d = v as usize;
    }
    let n = dims[0] * dims[1] * dims[2];
    let mut vals = Vec::with_capacity(n);
    for _ in 0..n {
        f.read_exact(&mut word).map_err(|e| CoreError::io(path, e))?;
        vals.push(f32::from_le_bytes(word) as f64);
    }
    Array3::from_shape_vec((dims[0], dims[1], dims[2]), vals)
        .map_err(|e| CoreError::Manifest(e.to_string()))
}
