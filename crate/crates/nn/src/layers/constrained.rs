//! Constrained high-pass convolution for forensic feature extraction.
//!
//! Each 5×5 kernel slice is projected onto the set {center tap = −1, sum of
//! the other 24 taps = 1}, so every filter is a learned prediction-error
//! (residual) operator. The projection must be re-applied after every
//! optimizer step; [`ConstrainedConv2d::project`] does that, and
//! [`ConstrainedConv2d::constraint_deviation`] measures how far the current
//! weights are from the set.

use ndarray::Array4;
use rand_chacha::ChaCha8Rng;

use crate::layers::conv::Conv2d;
use crate::module::{Layer, Mode, Param};

pub const CONSTRAINED_K: usize = 5;
const CENTER: usize = 2;
/// Below this absolute off-center sum the rescaling is numerically
/// meaningless and the slice is reset to the uniform feasible point.
const DEGENERATE_SUM: f64 = 1e-8;

/// 5×5, stride-1, pad-2 convolution whose kernels are constrained residual
/// filters. Bias-free: a bias would break the high-pass property.
pub struct ConstrainedConv2d {
    conv: Conv2d,
}

impl ConstrainedConv2d {
    pub fn new(c_in: usize, filters: usize, rng: &mut ChaCha8Rng) -> ConstrainedConv2d {
        let mut conv = Conv2d::new(c_in, filters, CONSTRAINED_K, 1, CENTER, rng);
        conv.bias.value.fill(0.0);
        let mut layer = ConstrainedConv2d { conv };
        layer.project();
        layer
    }

    /// Projects every kernel slice onto the constraint set. Call after each
    /// optimizer step.
    pub fn project(&mut self) {
        let shape = self.conv.weight.value.shape().to_vec();
        let (f_n, c_n) = (shape[0], shape[1]);
        let mut degenerate = 0;
        for f in 0..f_n {
            for c in 0..c_n {
                let mut sum = 0.0;
                for ky in 0..CONSTRAINED_K {
                    for kx in 0..CONSTRAINED_K {
                        if (ky, kx) != (CENTER, CENTER) {
                            sum += self.conv.weight.value[[f, c, ky, kx]];
                        }
                    }
                }
                if sum.abs() <= DEGENERATE_SUM {
                    degenerate += 1;
                    for ky in 0..CONSTRAINED_K {
                        for kx in 0..CONSTRAINED_K {
                            if (ky, kx) != (CENTER, CENTER) {
                                self.conv.weight.value[[f, c, ky, kx]] = 1.0 / 24.0;
                            }
                        }
                    }
                } else {
                    let scale = 1.0 / sum;
                    for ky in 0..CONSTRAINED_K {
                        for kx in 0..CONSTRAINED_K {
                            if (ky, kx) != (CENTER, CENTER) {
                                self.conv.weight.value[[f, c, ky, kx]] *= scale;
                            }
                        }
                    }
                }
                self.conv.weight.value[[f, c, CENTER, CENTER]] = -1.0;
            }
        }
        if degenerate > 0 {
            log::warn!("constrained conv: reset {degenerate} degenerate kernel slice(s)");
        }
    }

    /// Maximum deviation from the constraint set across all slices:
    /// `max(|center + 1|, |Σ_off-center − 1|)`.
    pub fn constraint_deviation(&self) -> f64 {
        let shape = self.conv.weight.value.shape();
        let (f_n, c_n) = (shape[0], shape[1]);
        let mut worst: f64 = 0.0;
        for f in 0..f_n {
            for c in 0..c_n {
                let mut sum = 0.0;
                for ky in 0..CONSTRAINED_K {
                    for kx in 0..CONSTRAINED_K {
                        if (ky, kx) == (CENTER, CENTER) {
                            worst = worst
                                .max((self.conv.weight.value[[f, c, ky, kx]] + 1.0).abs());
                        } else {
                            sum += self.conv.weight.value[[f, c, ky, kx]];
                        }
                    }
                }
                worst = worst.max((sum - 1.0).abs());
            }
        }
        worst
    }

    /// True when the center tap is exactly −1 in every slice and off-center
    /// sums are within `tol` of 1.
    pub fn satisfies_constraint(&self, tol: f64) -> bool {
        let shape = self.conv.weight.value.shape();
        let (f_n, c_n) = (shape[0], shape[1]);
        for f in 0..f_n {
            for c in 0..c_n {
                if self.conv.weight.value[[f, c, CENTER, CENTER]] != -1.0 {
                    return false;
                }
            }
        }
        self.constraint_deviation() <= tol
    }
}

impl Layer for ConstrainedConv2d {
    fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        self.conv.forward(x, mode)
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        self.conv.backward(grad_out)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        // Bias stays zero and out of the optimizer's reach.
        f("weight", &mut self.conv.weight);
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.conv.set_frozen(frozen);
    }
}
