//! Instance and batch normalization with exact backward passes.

use ndarray::{Array4, ArrayD, s};

use crate::init;
use crate::module::{Layer, Mode, Param};

const EPS: f64 = 1e-5;

/// Per-sample, per-channel normalization with affine parameters.
pub struct InstanceNorm2d {
    pub gamma: Param,
    pub beta: Param,
    frozen: bool,
    /// (x̂, inv_std per (n, c)) from the last forward.
    cache: Option<(Array4<f64>, ndarray::Array2<f64>)>,
}

impl InstanceNorm2d {
    pub fn new(channels: usize) -> InstanceNorm2d {
        InstanceNorm2d {
            gamma: Param::new(init::ones(&[channels])),
            beta: Param::new(init::zeros(&[channels])),
            frozen: false,
            cache: None,
        }
    }
}

impl Layer for InstanceNorm2d {
    fn forward(&mut self, x: &Array4<f64>, _mode: Mode) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.gamma.len(), "instance norm channels");
        let m = (h * w) as f64;
        let mut xhat = Array4::<f64>::zeros((n, c, h, w));
        let mut inv_std = ndarray::Array2::<f64>::zeros((n, c));
        let mut out = Array4::<f64>::zeros((n, c, h, w));
        for nn in 0..n {
            for cc in 0..c {
                let plane = x.slice(s![nn, cc, .., ..]);
                let mean = plane.sum() / m;
                let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
                let istd = 1.0 / (var + EPS).sqrt();
                inv_std[(nn, cc)] = istd;
                let (g, b) = (self.gamma.value[cc], self.beta.value[cc]);
                for i in 0..h {
                    for j in 0..w {
                        let xh = (x[(nn, cc, i, j)] - mean) * istd;
                        xhat[(nn, cc, i, j)] = xh;
                        out[(nn, cc, i, j)] = g * xh + b;
                    }
                }
            }
        }
        self.cache = Some((xhat, inv_std));
        out
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let (xhat, inv_std) = self.cache.as_ref().expect("forward before backward");
        let (n, c, h, w) = xhat.dim();
        let m = (h * w) as f64;
        let mut dx = Array4::<f64>::zeros((n, c, h, w));
        for nn in 0..n {
            for cc in 0..c {
                let gy = grad_out.slice(s![nn, cc, .., ..]);
                let xh = xhat.slice(s![nn, cc, .., ..]);
                let sum_gy = gy.sum();
                let sum_gy_xh = (&gy * &xh).sum();
                if !self.frozen {
                    self.beta.grad[cc] += sum_gy;
                    self.gamma.grad[cc] += sum_gy_xh;
                }
                let scale = self.gamma.value[cc] * inv_std[(nn, cc)];
                for i in 0..h {
                    for j in 0..w {
                        dx[(nn, cc, i, j)] = scale
                            * (gy[(i, j)] - sum_gy / m - xh[(i, j)] * sum_gy_xh / m);
                    }
                }
            }
        }
        dx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        f("gamma", &mut self.gamma);
        f("beta", &mut self.beta);
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
        self.gamma.frozen = frozen;
        self.beta.frozen = frozen;
    }
}

/// Batch normalization over (N, H, W) per channel, with running statistics
/// used in eval mode. The backward pass matches whichever mode the most
/// recent forward ran in.
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: ArrayD<f64>,
    pub running_var: ArrayD<f64>,
    pub momentum: f64,
    frozen: bool,
    last_mode: Mode,
    /// Train: (x̂, inv_std per channel). Eval: (x̂_eval, eval scale).
    cache: Option<(Array4<f64>, Vec<f64>)>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> BatchNorm2d {
        BatchNorm2d {
            gamma: Param::new(init::ones(&[channels])),
            beta: Param::new(init::zeros(&[channels])),
            running_mean: init::zeros(&[channels]),
            running_var: init::ones(&[channels]),
            momentum: 0.1,
            frozen: false,
            last_mode: Mode::Train,
            cache: None,
        }
    }
}

impl Layer for BatchNorm2d {
    fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.gamma.len(), "batch norm channels");
        let m = (n * h * w) as f64;
        let mut xhat = Array4::<f64>::zeros((n, c, h, w));
        let mut aux = vec![0.0; c];
        let mut out = Array4::<f64>::zeros((n, c, h, w));
        for cc in 0..c {
            let (mean, istd) = match mode {
                Mode::Train => {
                    let ch = x.slice(s![.., cc, .., ..]);
                    let mean = ch.sum() / m;
                    let var = ch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
                    let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
                    self.running_mean[cc] =
                        (1.0 - self.momentum) * self.running_mean[cc] + self.momentum * mean;
                    self.running_var[cc] =
                        (1.0 - self.momentum) * self.running_var[cc] + self.momentum * unbiased;
                    (mean, 1.0 / (var + EPS).sqrt())
                }
                Mode::Eval => (
                    self.running_mean[cc],
                    1.0 / (self.running_var[cc] + EPS).sqrt(),
                ),
            };
            aux[cc] = istd;
            let (g, b) = (self.gamma.value[cc], self.beta.value[cc]);
            for nn in 0..n {
                for i in 0..h {
                    for j in 0..w {
                        let xh = (x[(nn, cc, i, j)] - mean) * istd;
                        xhat[(nn, cc, i, j)] = xh;
                        out[(nn, cc, i, j)] = g * xh + b;
                    }
                }
            }
        }
        self.last_mode = mode;
        self.cache = Some((xhat, aux));
        out
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let (xhat, inv_std) = self.cache.as_ref().expect("forward before backward");
        let (n, c, h, w) = xhat.dim();
        let m = (n * h * w) as f64;
        let mut dx = Array4::<f64>::zeros((n, c, h, w));
        for cc in 0..c {
            let gy = grad_out.slice(s![.., cc, .., ..]);
            let xh = xhat.slice(s![.., cc, .., ..]);
            let sum_gy = gy.sum();
            let sum_gy_xh = (&gy * &xh).sum();
            if !self.frozen {
                self.beta.grad[cc] += sum_gy;
                self.gamma.grad[cc] += sum_gy_xh;
            }
            let scale = self.gamma.value[cc] * inv_std[cc];
            match self.last_mode {
                Mode::Train => {
                    for nn in 0..n {
                        for i in 0..h {
                            for j in 0..w {
                                dx[(nn, cc, i, j)] = scale
                                    * (gy[(nn, i, j)]
                                        - sum_gy / m
                                        - xh[(nn, i, j)] * sum_gy_xh / m);
                            }
                        }
                    }
                }
                // Eval statistics are constants: the map is affine.
                Mode::Eval => {
                    for nn in 0..n {
                        for i in 0..h {
                            for j in 0..w {
                                dx[(nn, cc, i, j)] = scale * gy[(nn, i, j)];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        f("gamma", &mut self.gamma);
        f("beta", &mut self.beta);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        f("running_mean", &mut self.running_mean);
        f("running_var", &mut self.running_var);
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
        self.gamma.frozen = frozen;
        self.beta.frozen = frozen;
    }
}
