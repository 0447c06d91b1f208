//! PSNR and transformation visualization helpers.

use crate::error::{CoreError, Result};
use crate::image::Image;

/// Peak signal-to-noise ratio in dB on the internal [0,1] scale
/// (`10·log10(1/MSE)`). Identical images return `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if a.pixels.dim() != b.pixels.dim() {
        return Err(CoreError::ShapeMismatch {
            expected: format!("{:?}", a.pixels.dim()),
            got: format!("{:?}", b.pixels.dim()),
        });
    }
    let n = a.pixels.len() as f64;
    let mse = a
        .pixels
        .iter()
        .zip(b.pixels.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

/// Mean of finite PSNR values; pairs with MSE = 0 are treated as the `cap`
/// value (reports usually cap at 100 dB) so one identical pair cannot make
/// the mean infinite.
pub fn mean_psnr_capped(values: &[f64], cap: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().map(|v| v.min(cap)).sum::<f64>() / values.len() as f64
}

/// Visualization of `x′ − x`: `clip(0.5 + gain·(x′−x), 0, 1)`.
pub fn amplified_delta(x: &Image, x_prime: &Image, gain: f64) -> Result<Image> {
    if x.pixels.dim() != x_prime.pixels.dim() {
        return Err(CoreError::ShapeMismatch {
            expected: format!("{:?}", x.pixels.dim()),
            got: format!("{:?}", x_prime.pixels.dim()),
        });
    }
    if gain <= 0.0 {
        return Err(CoreError::InvalidParameter(format!(
            "gain must be > 0, got {gain}"
        )));
    }
    let mut out = x.pixels.clone();
    out.zip_mut_with(&x_prime.pixels, |a, &b| {
        *a = (0.5 + gain * (b - *a)).clamp(0.0, 1.0);
    });
    Image::new(out, None)
}
