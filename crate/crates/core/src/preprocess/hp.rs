//! Fixed high-pass residual: the standard 5×5 steganalysis kernel.

use ndarray::{Array3, s};

use crate::image::Image;

/// The 5×5 kernel, scaled by 1/12. Sums to zero.
pub const HP_KERNEL: [[f64; 5]; 5] = {
    const S: f64 = 1.0 / 12.0;
    [
        [-1.0 * S, 2.0 * S, -2.0 * S, 2.0 * S, -1.0 * S],
        [2.0 * S, -6.0 * S, 8.0 * S, -6.0 * S, 2.0 * S],
        [-2.0 * S, 8.0 * S, -12.0 * S, 8.0 * S, -2.0 * S],
        [2.0 * S, -6.0 * S, 8.0 * S, -6.0 * S, 2.0 * S],
        [-1.0 * S, 2.0 * S, -2.0 * S, 2.0 * S, -1.0 * S],
    ]
};

/// Per-channel convolution with [`HP_KERNEL`], replicate padding, unclipped.
pub fn hp_residual(img: &Image) -> Array3<f64> {
    let (h, w) = img.dims();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = Array3::<f64>::zeros((h, w, 3));
    for c in 0..3 {
        let plane = img.pixels.slice(s![.., .., c]);
        for i in 0..h as isize {
            for j in 0..w as isize {
                let mut acc = 0.0;
                for (di, row) in HP_KERNEL.iter().enumerate() {
                    for (dj, &k) in row.iter().enumerate() {
                        let pi = clamp(i + di as isize - 2, h);
                        let pj = clamp(j + dj as isize - 2, w);
                        acc += k * plane[(pi, pj)];
                    }
                }
                out[(i as usize, j as usize, c)] = acc;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_sums_to_zero() {
        let s: f64 = HP_KERNEL.iter().flatten().sum();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn constant_image_gives_zero() {
        let img = Image::constant(9, 9, [0.7, 0.2, 0.9]).unwrap();
        let r = hp_residual(&img);
        for v in r.iter() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_reproduces_kernel() {
        // Impulse at the center of a 9×9 zero image: the correlation output
        // around the center is the (symmetric) kernel itself, scaled.
        let mut arr = Array3::<f64>::zeros((9, 9, 3));
        arr[(4, 4, 0)] = 1.0;
        let img = Image::new(arr, None).unwrap();
        let r = hp_residual(&img);
        for di in 0..5usize {
            for dj in 0..5usize {
                let got = r[(2 + di, 2 + dj, 0)];
                // Kernel is symmetric under 180° so correlation == convolution.
                assert!((got - HP_KERNEL[4 - di][4 - dj]).abs() < 1e-12);
            }
        }
        // Other channels untouched.
        assert!(r.slice(s![.., .., 1]).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let arr = Array3::from_shape_fn((8, 8, 3), |_| rng.gen::<f64>());
        let img = Image::new(arr.clone(), None).unwrap();
        let got = hp_residual(&img);
        let clamp = |v: isize, n: isize| v.clamp(0, n - 1) as usize;
        for c in 0..3 {
            for i in 0..8isize {
                for j in 0..8isize {
                    let mut want = 0.0;
                    for di in -2..=2isize {
                        for dj in -2..=2isize {
                            want += HP_KERNEL[(di + 2) as usize][(dj + 2) as usize]
                                * arr[(clamp(i + di, 8), clamp(j + dj, 8), c)];
                        }
                    }
                    assert!((got[(i as usize, j as usize, c)] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let a = Array3::from_shape_fn((8, 8, 3), |_| rng.gen::<f64>() * 0.5);
        let b = Array3::from_shape_fn((8, 8, 3), |_| rng.gen::<f64>() * 0.5);
        let combo = Image::new(&a * 0.3 + &b * 0.6, None).unwrap();
        let ra = hp_residual(&Image::new(a, None).unwrap());
        let rb = hp_residual(&Image::new(b, None).unwrap());
        let rc = hp_residual(&combo);
        let want = &ra * 0.3 + &rb * 0.6;
        for (x, y) in rc.iter().zip(want.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
