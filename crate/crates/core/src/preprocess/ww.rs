//! Wavelet-domain Wiener residual (the "WW" extractor).
//!
//! This is the ground-truth noise residual used to supervise the evaluator's
//! first stage: `x − H(x)` where `H` is a 4-level Daubechies-8 Wiener
//! denoiser with locally adaptive variance estimation.

use ndarray::{Array2, Array3, s};

use crate::error::{CoreError, Result};
use crate::image::Image;
use crate::preprocess::wavelet::{Dwt2d, dwt2d, idwt2d};

/// Default noise floor on the [0,1] pixel scale.
pub const WW_SIGMA0: f64 = 3.0 / 255.0;

const LEVELS: usize = 4;
const WINDOWS: [usize; 4] = [3, 5, 7, 9];

/// Box mean with replicate padding, separable implementation.
fn box_mean(x: &Array2<f64>, win: usize) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let r = (win / 2) as isize;
    let inv = 1.0 / win as f64;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut horiz = Array2::<f64>::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols as isize {
            let mut s = 0.0;
            for dj in -r..=r {
                s += x[(i, clamp(j + dj, cols))];
            }
            horiz[(i, j as usize)] = s * inv;
        }
    }
    let mut out = Array2::<f64>::zeros((rows, cols));
    for j in 0..cols {
        for i in 0..rows as isize {
            let mut s = 0.0;
            for di in -r..=r {
                s += horiz[(clamp(i + di, rows), j)];
            }
            out[(i as usize, j)] = s * inv;
        }
    }
    out
}

/// Wiener attenuation of one detail band: estimate the local signal variance
/// as the most conservative (minimum) of four window sizes, then shrink.
fn wiener_band(d: &Array2<f64>, sigma0_sq: f64) -> Array2<f64> {
    let sq = d.mapv(|v| v * v);
    let mut var: Option<Array2<f64>> = None;
    for win in WINDOWS {
        let est = box_mean(&sq, win).mapv(|m| (m - sigma0_sq).max(0.0));
        var = Some(match var {
            None => est,
            Some(mut acc) => {
                acc.zip_mut_with(&est, |a, &b| *a = a.min(b));
                acc
            }
        });
    }
    let var = var.unwrap();
    let mut out = d.clone();
    out.zip_mut_with(&var, |c, &v| *c = *c * v / (v + sigma0_sq));
    out
}

/// Replicate-pads both sides of a plane up to multiples of `2^LEVELS`.
fn pad_to_multiple(x: &Array2<f64>, div: usize) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let pr = rows.div_ceil(div) * div;
    let pc = cols.div_ceil(div) * div;
    if pr == rows && pc == cols {
        return x.clone();
    }
    Array2::from_shape_fn((pr, pc), |(i, j)| {
        x[(i.min(rows - 1), j.min(cols - 1))]
    })
}

fn denoise_plane(x: &Array2<f64>, sigma0: f64) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let padded = pad_to_multiple(x, 1 << LEVELS);
    let t = dwt2d(&padded, LEVELS);
    let s0 = sigma0 * sigma0;
    let details = t
        .details
        .iter()
        .map(|b| crate::preprocess::wavelet::DetailBands {
            lh: wiener_band(&b.lh, s0),
            hl: wiener_band(&b.hl, s0),
            hh: wiener_band(&b.hh, s0),
        })
        .collect();
    let rec = idwt2d(&Dwt2d {
        approx: t.approx,
        details,
    });
    rec.slice(s![0..rows, 0..cols]).to_owned()
}

/// Noise residual `x − H(x)` per channel. Requires both sides ≥ 32 so the
/// 4-level decomposition is meaningful.
pub fn ww_residual(img: &Image, sigma0: f64) -> Result<Array3<f64>> {
    let (h, w) = img.dims();
    if h < 32 || w < 32 {
        return Err(CoreError::TooSmall {
            h,
            w,
            reason: "wavelet Wiener residual needs at least 32x32".into(),
        });
    }
    if sigma0 <= 0.0 {
        return Err(CoreError::InvalidParameter(format!(
            "sigma0 must be > 0, got {sigma0}"
        )));
    }
    let mut out = Array3::<f64>::zeros((h, w, 3));
    for c in 0..3 {
        let plane = img.pixels.slice(s![.., .., c]).to_owned();
        let den = denoise_plane(&plane, sigma0);
        let mut dst = out.slice_mut(s![.., .., c]);
        for i in 0..h {
            for j in 0..w {
                dst[(i, j)] = plane[(i, j)] - den[(i, j)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_residual_is_zero() {
        let img = Image::constant(32, 32, [0.41, 0.52, 0.63]).unwrap();
        let r = ww_residual(&img, WW_SIGMA0).unwrap();
        for v in r.iter() {
            assert!(v.abs() < 1e-9, "residual {v}");
        }
    }

    #[test]
    fn white_noise_large_sigma0_keeps_detail_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let arr = Array3::from_shape_fn((32, 32, 3), |_| 0.5 + 0.05 * (rng.gen::<f64>() - 0.5));
        let img = Image::new(arr, None).unwrap();
        // sigma0 far above the actual noise level: the Wiener gain collapses
        // to 0 and the residual carries the entire detail subspace.
        let r = ww_residual(&img, 0.5).unwrap();
        let e_res: f64 = r.iter().map(|v| v * v).sum();
        let mut e_detail = 0.0;
        for c in 0..3 {
            let plane = img.pixels.slice(s![.., .., c]).to_owned();
            e_detail += dwt2d(&plane, 4).detail_energy();
        }
        assert!(
            e_res >= 0.95 * e_detail,
            "residual energy {e_res} vs detail {e_detail}"
        );
        assert!(e_res <= 1.05 * e_detail);
    }

    #[test]
    fn rejects_small_and_bad_sigma() {
        let small = Image::constant(16, 32, [0.5; 3]).unwrap();
        assert!(ww_residual(&small, WW_SIGMA0).is_err());
        let ok = Image::constant(32, 32, [0.5; 3]).unwrap();
        assert!(ww_residual(&ok, 0.0).is_err());
        assert!(ww_residual(&ok, -1.0).is_err());
    }

    #[test]
    fn non_multiple_of_16_sizes_are_padded() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let arr = Array3::from_shape_fn((40, 36, 3), |_| rng.gen::<f64>());
        let img = Image::new(arr, None).unwrap();
        let r = ww_residual(&img, WW_SIGMA0).unwrap();
        assert_eq!(r.dim(), (40, 36, 3));
        assert!(r.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn box_mean_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let x = Array2::from_shape_fn((7, 9), |_| rng.gen::<f64>());
        let got = box_mean(&x, 5);
        let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
        for i in 0..7isize {
            for j in 0..9isize {
                let mut s = 0.0;
                for di in -2..=2isize {
                    for dj in -2..=2isize {
                        s += x[(clamp(i + di, 7), clamp(j + dj, 9))];
                    }
                }
                let want = s / 25.0;
                assert!((got[(i as usize, j as usize)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wiener_gain_bounded_by_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let d = Array2::from_shape_fn((16, 16), |_| rng.gen::<f64>() - 0.5);
        let out = wiener_band(&d, WW_SIGMA0 * WW_SIGMA0);
        for (o, i) in out.iter().zip(d.iter()) {
            assert!(o.abs() <= i.abs() + 1e-15, "attenuation must shrink");
            assert!(o.signum() * i.signum() >= 0.0);
        }
    }
}
