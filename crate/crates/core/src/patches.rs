//! Non-overlapping square patch extraction for training.

use ndarray::{Array3, s};

use crate::dihedral::dih4_apply_array;
use crate::error::{CoreError, Result};
use crate::image::Image;

/// Default training patch side; desk-scale runs use 32.
pub const PATCH_SIZE: usize = 64;

/// A square training patch. `augment_id` records the Dih4 element applied
/// relative to the source crop (0 = unaugmented).
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pixels: Array3<f64>,
    pub label: Option<u32>,
    pub augment_id: u8,
}

impl Patch {
    /// Side length. Patches are always square.
    pub fn size(&self) -> usize {
        self.pixels.dim().0
    }

    /// Applies Dih4 element `k` and composes it into `augment_id`.
    pub fn dih4(&self, k: u8) -> Result<Patch> {
        let pixels = dih4_apply_array(&self.pixels, k)?;
        Ok(Patch {
            pixels,
            label: self.label,
            augment_id: crate::dihedral::DIH4_COMPOSE[k as usize][self.augment_id as usize],
        })
    }

    /// View as an [`Image`] (e.g. for PSNR or preprocessing).
    pub fn to_image(&self) -> Result<Image> {
        Image::new(self.pixels.clone(), self.label)
    }
}

/// Tiles the top-left region of `img` with non-overlapping `size`×`size`
/// patches in row-major order. Images smaller than `size` yield no patches.
pub fn extract_patches(img: &Image, size: usize) -> Result<Vec<Patch>> {
    if size == 0 {
        return Err(CoreError::InvalidParameter("patch size must be > 0".into()));
    }
    let (h, w) = img.dims();
    let (rows, cols) = (h / size, w / size);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let view = img
                .pixels
                .slice(s![r * size..(r + 1) * size, c * size..(c + 1) * size, ..]);
            out.push(Patch {
                pixels: view.to_owned(),
                label: img.label,
                augment_id: 0,
            });
        }
    }
    Ok(out)
}
