//! Fully connected layer over (N, C, 1, 1) activations.

use ndarray::{Array4, ArrayView2};
use rand_chacha::ChaCha8Rng;

use crate::init;
use crate::module::{Layer, Mode, Param};

/// Linear map applied after global pooling; input must be (N, C, 1, 1)
/// and output is (N, K, 1, 1).
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    frozen: bool,
    cache: Option<Array4<f64>>,
}

impl Linear {
    pub fn new(c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Linear {
        Linear {
            weight: Param::new(init::he_normal(&[c_out, c_in], c_in, rng)),
            bias: Param::new(init::zeros(&[c_out])),
            frozen: false,
            cache: None,
        }
    }

    fn dims(&self) -> (usize, usize) {
        let sh = self.weight.value.shape();
        (sh[0], sh[1])
    }
}

impl Layer for Linear {
    fn forward(&mut self, x: &Array4<f64>, _mode: Mode) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let (c_out, c_in) = self.dims();
        assert_eq!((c, h, w), (c_in, 1, 1), "linear expects pooled (N,C,1,1) input");
        let w_mat =
            ArrayView2::from_shape((c_out, c_in), self.weight.value.as_slice().unwrap()).unwrap();
        let mut out = Array4::<f64>::zeros((n, c_out, 1, 1));
        for nn in 0..n {
            for k in 0..c_out {
                let mut acc = self.bias.value[k];
                for cc in 0..c_in {
                    acc += w_mat[(k, cc)] * x[(nn, cc, 0, 0)];
                }
                out[(nn, k, 0, 0)] = acc;
            }
        }
        self.cache = Some(x.clone());
        out
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let x = self.cache.as_ref().expect("forward before backward");
        let (n, c_in, _, _) = x.dim();
        let (c_out, _) = self.dims();
        let w_snapshot = self.weight.value.clone();
        let w_mat = ArrayView2::from_shape((c_out, c_in), w_snapshot.as_slice().unwrap()).unwrap();
        let mut dx = Array4::<f64>::zeros((n, c_in, 1, 1));
        for nn in 0..n {
            for k in 0..c_out {
                let g = grad_out[(nn, k, 0, 0)];
                if !self.frozen {
                    self.bias.grad[k] += g;
                    for cc in 0..c_in {
                        self.weight.grad[[k, cc]] += g * x[(nn, cc, 0, 0)];
                    }
                }
                for cc in 0..c_in {
                    dx[(nn, cc, 0, 0)] += g * w_mat[(k, cc)];
                }
            }
        }
        dx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
        self.weight.frozen = frozen;
        self.bias.frozen = frozen;
    }
}
