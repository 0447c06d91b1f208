//! Pooling layers.

use ndarray::Array4;

use crate::module::{Layer, Mode, Param};

/// Max pooling with square window and stride equal to the window size.
/// Trailing rows/columns that do not fill a window are dropped.
pub struct MaxPool2d {
    pub k: usize,
    /// For each output cell, the flat input index that won.
    argmax: Option<(Vec<usize>, (usize, usize, usize, usize))>,
}

impl MaxPool2d {
    pub fn new(k: usize) -> MaxPool2d {
        assert!(k >= 1);
        MaxPool2d { k, argmax: None }
    }
}

impl Layer for MaxPool2d {
    fn forward(&mut self, x: &Array4<f64>, _mode: Mode) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let (oh, ow) = (h / self.k, w / self.k);
        assert!(oh > 0 && ow > 0, "input smaller than pool window");
        let mut out = Array4::<f64>::zeros((n, c, oh, ow));
        let mut arg = vec![0usize; n * c * oh * ow];
        let xs = x.as_slice().expect("standard layout");
        let mut a = 0;
        for nn in 0..n {
            for cc in 0..c {
                let plane_off = (nn * c + cc) * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0;
                        for ky in 0..self.k {
                            for kx in 0..self.k {
                                let idx =
                                    plane_off + (oy * self.k + ky) * w + ox * self.k + kx;
                                if xs[idx] > best {
                                    best = xs[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        out[(nn, cc, oy, ox)] = best;
                        arg[a] = best_idx;
                        a += 1;
                    }
                }
            }
        }
        self.argmax = Some((arg, (n, c, h, w)));
        out
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let (arg, in_dim) = self.argmax.as_ref().expect("forward before backward");
        let mut dx = Array4::<f64>::zeros(*in_dim);
        let ds = dx.as_slice_mut().expect("standard layout");
        for (g, &idx) in grad_out.iter().zip(arg.iter()) {
            ds[idx] += g;
        }
        dx
    }

    fn visit_params(&mut self, _f: &mut dyn FnMut(&str, &mut Param)) {}

    fn set_frozen(&mut self, _frozen: bool) {}
}

/// Average pooling with square window and stride equal to the window size.
pub struct AvgPool2d {
    pub k: usize,
    in_dim: Option<(usize, usize, usize, usize)>,
}

impl AvgPool2d {
    pub fn new(k: usize) -> AvgPool2d {
        assert!(k >= 1);
        AvgPool2d { k, in_dim: None }
    }
}

impl Layer for AvgPool2d {
    fn forward(&mut self, x: &Array4<f64>, _mode: Mode) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let (oh, ow) = (h / self.k, w / self.k);
        assert!(oh > 0 && ow > 0, "input smaller than pool window");
        let inv = 1.0 / (self.k * self.k) as f64;
        let mut out = Array4::<f64>::zeros((n, c, oh, ow));
        for nn in 0..n {
            for cc in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ky in 0..self.k {
                            for kx in 0..self.k {
                                acc += x[(nn, cc, oy * self.k + ky, ox * self.k + kx)];
                            }
                        }
                        out[(nn, cc, oy, ox)] = acc * inv;
                    }
                }
            }
        }
        self.in_dim = Some((n, c, h, w));
        out
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let dim = self.in_dim.expect("forward before backward");
        let inv = 1.0 / (self.k * self.k) as f64;
        let mut dx = Array4::<f64>::zeros(dim);
        let (_, _, _, _) = dim;
        let (n, c, oh, ow) = grad_out.dim();
        for nn in 0..n {
            for cc in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = grad_out[(nn, cc, oy, ox)] * inv;
                        for ky in 0..self.k {
                            for kx in 0..self.k {
                                dx[(nn, cc, oy * self.k + ky, ox * self.k + kx)] += g;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn visit_params(&mut self, _f: &mut dyn FnMut(&str, &mut Param)) {}

    fn set_frozen(&mut self, _frozen: bool) {}
}

/// Global average pool: (N, C, H, W) → (N, C, 1, 1).
#[derive(Default)]
pub struct GlobalAvgPool {
    in_dim: Option<(usize, usize, usize, usize)>,
}

impl GlobalAvgPool {
    pub fn new() -> GlobalAvgPool {
        GlobalAvgPool::default()
    }
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, x: &Array4<f64>, _mode: Mode) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let inv = 1.0 / (h * w) as f64;
        let mut out = Array4::<f64>::zeros((n, c, 1, 1));
        for nn in 0..n {
            for cc in 0..c {
                out[(nn, cc, 0, 0)] = x.slice(ndarray::s![nn, cc, .., ..]).sum() * inv;
            }
        }
        self.in_dim = Some((n, c, h, w));
        out
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = self.in_dim.expect("forward before backward");
        let inv = 1.0 / (h * w) as f64;
        let mut dx = Array4::<f64>::zeros((n, c, h, w));
        for nn in 0..n {
            for cc in 0..c {
                let g = grad_out[(nn, cc, 0, 0)] * inv;
                dx.slice_mut(ndarray::s![nn, cc, .., ..]).fill(g);
            }
        }
        dx
    }

    fn visit_params(&mut self, _f: &mut dyn FnMut(&str, &mut Param)) {}

    fn set_frozen(&mut self, _frozen: bool) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn maxpool_picks_window_maxima_and_routes_gradient() {
        let plane = arr2(&[
            [1.0, 5.0, 2.0, 0.0],
            [3.0, 4.0, 1.0, 7.0],
            [0.0, 0.0, 9.0, 8.0],
            [2.0, 1.0, 6.0, 9.5],
        ]);
        let x = plane.insert_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
        let mut pool = MaxPool2d::new(2);
        let y = pool.forward(&x, Mode::Train);
        assert_eq!(y[(0, 0, 0, 0)], 5.0);
        assert_eq!(y[(0, 0, 0, 1)], 7.0);
        assert_eq!(y[(0, 0, 1, 0)], 2.0);
        assert_eq!(y[(0, 0, 1, 1)], 9.5);
        let g = Array4::from_elem((1, 1, 2, 2), 1.0);
        let dx = pool.backward(&g);
        assert_eq!(dx[(0, 0, 0, 1)], 1.0); // 5.0 won its window
        assert_eq!(dx[(0, 0, 1, 3)], 1.0); // 7.0
        assert_eq!(dx[(0, 0, 3, 0)], 1.0); // 2.0
        assert_eq!(dx[(0, 0, 3, 3)], 1.0); // 9.5
        assert_eq!(dx.sum(), 4.0);
    }

    #[test]
    fn avgpool_means_and_spreads() {
        let x = Array4::from_shape_fn((1, 1, 4, 4), |(_, _, i, j)| (i * 4 + j) as f64);
        let mut pool = AvgPool2d::new(2);
        let y = pool.forward(&x, Mode::Train);
        assert_eq!(y[(0, 0, 0, 0)], (0.0 + 1.0 + 4.0 + 5.0) / 4.0);
        let dx = pool.backward(&Array4::from_elem((1, 1, 2, 2), 4.0));
        assert!(dx.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn global_avg_pool_roundtrip() {
        let x = Array4::from_shape_fn((2, 3, 4, 5), |(n, c, i, j)| {
            (n + c + i + j) as f64 * 0.1
        });
        let mut pool = GlobalAvgPool::new();
        let y = pool.forward(&x, Mode::Train);
        assert_eq!(y.dim(), (2, 3, 1, 1));
        let want = x.slice(ndarray::s![1, 2, .., ..]).sum() / 20.0;
        assert!((y[(1, 2, 0, 0)] - want).abs() < 1e-12);
        let dx = pool.backward(&Array4::from_elem((2, 3, 1, 1), 20.0));
        assert!(dx.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }
}
