//! Central-difference gradient verification for layers and whole networks.
//!
//! The scalar objective is a weighted sum of the network output with fixed
//! pseudorandom weights, which exercises every output coordinate without
//! favoring any. Relative error uses `max(1, |numeric|, |analytic|)` in the
//! denominator so tiny gradients are compared absolutely.

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::module::{Layer, LayerExt, Mode};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

pub fn rel_err(numeric: f64, analytic: f64) -> f64 {
    (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1.0)
}

fn objective(layer: &mut dyn Layer, x: &Array4<f64>, wgt: &Array4<f64>, mode: Mode) -> f64 {
    (&layer.forward(x, mode) * wgt).sum()
}

/// Checks d(objective)/dx at `n_coords` random input coordinates.
pub fn gradcheck_input(
    layer: &mut dyn Layer,
    x: &Array4<f64>,
    mode: Mode,
    n_coords: usize,
    seed: u64,
    step: f64,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = layer.forward(x, mode);
    let wgt = Array4::from_shape_fn(y.raw_dim(), |_| rng.gen::<f64>() * 2.0 - 1.0);
    let dx = layer.backward(&wgt);

    let len = x.len();
    let mut worst = 0.0_f64;
    let mut checked = 0;
    for _ in 0..n_coords {
        let flat = rng.gen_range(0..len);
        let idx = flat_to_idx(x.dim(), flat);
        let mut xp = x.clone();
        xp[idx] += step;
        let mut xm = x.clone();
        xm[idx] -= step;
        let num = (objective(layer, &xp, &wgt, mode) - objective(layer, &xm, &wgt, mode))
            / (2.0 * step);
        worst = worst.max(rel_err(num, dx[idx]));
        checked += 1;
    }
    GradCheckReport { max_rel_err: worst, checked }
}

/// Checks d(objective)/dθ at `n_coords` random parameter coordinates drawn
/// across all parameters (proportionally to their sizes).
pub fn gradcheck_params(
    layer: &mut dyn Layer,
    x: &Array4<f64>,
    mode: Mode,
    n_coords: usize,
    seed: u64,
    step: f64,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    layer.zero_grad();
    let y = layer.forward(x, mode);
    let wgt = Array4::from_shape_fn(y.raw_dim(), |_| rng.gen::<f64>() * 2.0 - 1.0);
    let _ = layer.backward(&wgt);

    let mut sizes = Vec::new();
    layer.visit_params(&mut |_, p| sizes.push(p.len()));
    let total: usize = sizes.iter().sum();
    assert!(total > 0, "gradcheck_params on a parameter-free layer");

    let mut worst = 0.0_f64;
    let mut checked = 0;
    for _ in 0..n_coords {
        let mut flat = rng.gen_range(0..total);
        let mut ordinal = 0;
        while flat >= sizes[ordinal] {
            flat -= sizes[ordinal];
            ordinal += 1;
        }
        let analytic = read_grad(layer, ordinal, flat);
        nudge(layer, ordinal, flat, step);
        let fp = objective(layer, x, &wgt, mode);
        nudge(layer, ordinal, flat, -2.0 * step);
        let fm = objective(layer, x, &wgt, mode);
        nudge(layer, ordinal, flat, step);
        let num = (fp - fm) / (2.0 * step);
        worst = worst.max(rel_err(num, analytic));
        checked += 1;
    }
    GradCheckReport { max_rel_err: worst, checked }
}

fn flat_to_idx(dim: (usize, usize, usize, usize), flat: usize) -> (usize, usize, usize, usize) {
    let (_, c, h, w) = dim;
    let j = flat % w;
    let i = (flat / w) % h;
    let cc = (flat / (w * h)) % c;
    let n = flat / (w * h * c);
    (n, cc, i, j)
}

fn nudge(layer: &mut dyn Layer, ordinal: usize, offset: usize, delta: f64) {
    let mut i = 0;
    layer.visit_params(&mut |_, p| {
        if i == ordinal {
            p.value.as_slice_mut().expect("standard layout")[offset] += delta;
        }
        i += 1;
    });
}

fn read_grad(layer: &mut dyn Layer, ordinal: usize, offset: usize) -> f64 {
    let mut i = 0;
    let mut out = 0.0;
    layer.visit_params(&mut |_, p| {
        if i == ordinal {
            out = p.grad.as_slice().expect("standard layout")[offset];
        }
        i += 1;
    });
    out
}
