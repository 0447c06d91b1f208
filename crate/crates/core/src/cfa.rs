//! Bayer CFA mosaic projection and bilinear demosaicing.
//!
//! `remosaic` projects an RGB image onto the RGGB mosaic and interpolates it
//! back, stripping the original demosaicing traces so a generator has to
//! re-demosaic its input.

use ndarray::{Array2, Array3};

use crate::error::{CoreError, Result};
use crate::image::Image;

/// Bayer 2×2 color assignment. Only RGGB is used here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CfaPattern {
    #[default]
    Rggb,
}

impl CfaPattern {
    /// Channel index (0=R,1=G,2=B) sampled at pixel `(i, j)`.
    #[inline]
    pub fn channel_at(self, i: usize, j: usize) -> usize {
        match (i % 2, j % 2) {
            (0, 0) => 0,
            (0, 1) | (1, 0) => 1,
            _ => 2,
        }
    }
}

/// Projects an RGB image to the single-plane CFA raster.
pub fn mosaic(img: &Image, pattern: CfaPattern) -> Array2<f64> {
    let (h, w) = img.dims();
    Array2::from_shape_fn((h, w), |(i, j)| {
        img.pixels[(i, j, pattern.channel_at(i, j))]
    })
}

/// Bilinear demosaic on a raw plane (no minimum-size requirement): known
/// sites pass through, missing sites average the nearest same-color
/// neighbors, edges handled by replicate padding. Output clipped to `[0,1]`.
pub fn demosaic_bilinear_array(plane: &Array2<f64>, pattern: CfaPattern) -> Result<Array3<f64>> {
    let (h, w) = plane.dim();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(CoreError::OddDimensions { h, w });
    }
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let fetch = |i: isize, j: isize| plane[(clamp(i, h), clamp(j, w))];
    // Neighbor offsets by (site parity, wanted channel).
    let cross: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    let diag: [(isize, isize); 4] = [(-1, -1), (-1, 1), (1, -1), (1, 1)];
    let horiz: [(isize, isize); 2] = [(0, -1), (0, 1)];
    let vert: [(isize, isize); 2] = [(-1, 0), (1, 0)];

    let mut out = Array3::<f64>::zeros((h, w, 3));
    for i in 0..h {
        for j in 0..w {
            let (ii, jj) = (i as isize, j as isize);
            let avg = |offs: &[(isize, isize)]| {
                offs.iter().map(|&(di, dj)| fetch(ii + di, jj + dj)).sum::<f64>()
                    / offs.len() as f64
            };
            let site = pattern.channel_at(i, j);
            let (r, g, b) = match site {
                0 => (plane[(i, j)], avg(&cross), avg(&diag)),
                2 => (avg(&diag), avg(&cross), plane[(i, j)]),
                _ => {
                    // Green site: R neighbors sit along the row on R rows,
                    // along the column on B rows; B is the opposite.
                    if i % 2 == 0 {
                        (avg(&horiz), plane[(i, j)], avg(&vert))
                    } else {
                        (avg(&vert), plane[(i, j)], avg(&horiz))
                    }
                }
            };
            out[(i, j, 0)] = r.clamp(0.0, 1.0);
            out[(i, j, 1)] = g.clamp(0.0, 1.0);
            out[(i, j, 2)] = b.clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// [`demosaic_bilinear_array`] wrapped into an [`Image`] (so the plane must
/// satisfy the image minimum-size invariant).
pub fn demosaic_bilinear(plane: &Array2<f64>, pattern: CfaPattern) -> Result<Image> {
    Image::new(demosaic_bilinear_array(plane, pattern)?, None)
}

/// Mosaic followed by bilinear demosaic; label and path metadata preserved.
pub fn remosaic(img: &Image) -> Result<Image> {
    let plane = mosaic(img, CfaPattern::Rggb);
    let mut out = demosaic_bilinear(&plane, CfaPattern::Rggb)?;
    out.label = img.label;
    out.source_path = img.source_path.clone();
    Ok(out)
}
