//! Floating-point RGB raster with camera-model label metadata.
//!
//! Pixels are stored H×W×3 as `f64` in `[0,1]`. 8-bit conversion happens only
//! at file I/O boundaries (round-half-up, clip), so losses and PSNR operate on
//! a single internal scale.

use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageReader, RgbImage};
use ndarray::Array3;

use crate::error::{CoreError, Result};

/// Minimum spatial extent accepted for an [`Image`].
pub const MIN_SIDE: usize = 8;

/// An RGB image in `[0,1]` with optional source-model label (1-based).
#[derive(Debug, Clone)]
pub struct Image {
    pub pixels: Array3<f64>,
    /// Camera-model id in `1..=c`, when known.
    pub label: Option<u32>,
    pub source_path: Option<PathBuf>,
}

impl Image {
    /// Wraps an H×W×3 array, validating the type invariants.
    pub fn new(pixels: Array3<f64>, label: Option<u32>) -> Result<Self> {
        let (h, w, c) = pixels.dim();
        if c != 3 {
            return Err(CoreError::ShapeMismatch {
                expected: "HxWx3".into(),
                got: format!("{h}x{w}x{c}"),
            });
        }
        if h < MIN_SIDE || w < MIN_SIDE {
            return Err(CoreError::TooSmall {
                h,
                w,
                reason: format!("both sides must be >= {MIN_SIDE}"),
            });
        }
        for &v in pixels.iter() {
            if !(0.0..=1.0).contains(&v) {
                return Err(CoreError::OutOfRange { value: v });
            }
        }
        Ok(Image {
            pixels,
            label,
            source_path: None,
        })
    }

    /// Height, width.
    pub fn dims(&self) -> (usize, usize) {
        let (h, w, _) = self.pixels.dim();
        (h, w)
    }

    pub fn with_label(mut self, label: u32) -> Self {
        self.label = Some(label);
        self
    }

    /// Loads an 8-bit RGB PNG or JPEG. Grayscale and paletted inputs are
    /// rejected rather than silently expanded.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = ImageReader::open(path)
            .map_err(|e| CoreError::io(path, e))?
            .with_guessed_format()
            .map_err(|e| CoreError::io(path, e))?;
        let dynimg = reader.decode()?;
        let mut img = Self::from_dynamic(dynimg, path)?;
        img.source_path = Some(path.to_path_buf());
        Ok(img)
    }

    fn from_dynamic(dynimg: DynamicImage, path: &Path) -> Result<Self> {
        let rgb = match dynimg {
            DynamicImage::ImageRgb8(rgb) => rgb,
            DynamicImage::ImageRgba8(rgba) => DynamicImage::ImageRgba8(rgba).to_rgb8(),
            other => {
                return Err(CoreError::NotRgb(format!(
                    "{}: {:?} color type",
                    path.display(),
                    other.color()
                )))
            }
        };
        Self::from_rgb8(&rgb)
    }

    /// Converts an 8-bit RGB buffer to the internal `[0,1]` scale.
    pub fn from_rgb8(rgb: &RgbImage) -> Result<Self> {
        let (w, h) = rgb.dimensions();
        let (h, w) = (h as usize, w as usize);
        let mut pixels = Array3::zeros((h, w, 3));
        for (x, y, p) in rgb.enumerate_pixels() {
            for c in 0..3 {
                pixels[(y as usize, x as usize, c)] = p.0[c] as f64 / 255.0;
            }
        }
        Image::new(pixels, None)
    }

    /// Quantizes to 8-bit RGB (round-half-up after clipping).
    pub fn to_rgb8(&self) -> RgbImage {
        let (h, w) = self.dims();
        let mut out = RgbImage::new(w as u32, h as u32);
        for i in 0..h {
            for j in 0..w {
                let mut px = [0u8; 3];
                for c in 0..3 {
                    px[c] = quantize_u8(self.pixels[(i, j, c)]);
                }
                out.put_pixel(j as u32, i as u32, image::Rgb(px));
            }
        }
        out
    }

    /// Writes a lossless PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_rgb8().save(path)?;
        Ok(())
    }

    /// Round-trips through the 8-bit representation without touching disk.
    /// This is what evaluation sees: only quantized images count.
    pub fn quantized(&self) -> Image {
        let mut img = Image::from_rgb8(&self.to_rgb8()).expect("quantized image is valid");
        img.label = self.label;
        img.source_path = self.source_path.clone();
        img
    }

    /// Center-crops to even height and width (CFA tiling needs even parity).
    pub fn center_crop_even(&self) -> Image {
        let (h, w) = self.dims();
        let (nh, nw) = (h - h % 2, w - w % 2);
        if (nh, nw) == (h, w) {
            return self.clone();
        }
        let (i0, j0) = ((h - nh) / 2, (w - nw) / 2);
        let pixels = self
            .pixels
            .slice(ndarray::s![i0..i0 + nh, j0..j0 + nw, ..])
            .to_owned();
        Image {
            pixels,
            label: self.label,
            source_path: self.source_path.clone(),
        }
    }

    /// Builds a constant image, mostly for tests and probes.
    pub fn constant(h: usize, w: usize, rgb: [f64; 3]) -> Result<Self> {
        let mut pixels = Array3::zeros((h, w, 3));
        for c in 0..3 {
            pixels.slice_mut(ndarray::s![.., .., c]).fill(rgb[c]);
        }
        Image::new(pixels, None)
    }
}

/// `[0,1]` to 8-bit with round-half-up and clipping.
pub fn quantize_u8(v: f64) -> u8 {
    let scaled = (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor();
    scaled.clamp(0.0, 255.0) as u8
}
