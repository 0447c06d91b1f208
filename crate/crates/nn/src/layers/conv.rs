//! Convolution and transposed convolution via chunked im2col + GEMM.
//!
//! Chunking bounds the column-matrix footprint so 512×512 forwards stay
//! within a laptop-sized memory budget; at training sizes (≤ 64×64) a chunk
//! covers the whole batch and the GEMMs run at full size.

use ndarray::{Array2, Array4, ArrayView2, ArrayViewMut2, s};
use rand_chacha::ChaCha8Rng;

use crate::init;
use crate::module::{Layer, Mode, Param};

/// Target bytes for one column chunk.
const CHUNK_BYTES: usize = 64 << 20;

fn chunk_len(ckk: usize, total: usize, min: usize) -> usize {
    (CHUNK_BYTES / (8 * ckk)).clamp(min.max(1), total.max(1))
}

/// Output spatial size of a conv with the given geometry.
pub fn conv_out_size(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

/// Fills `col` (CKK × m_len) from `x` for linear output positions
/// `m0..m0+m_len`, where m indexes (n, oh, ow) row-major.
#[allow(clippy::too_many_arguments)]
fn im2col_chunk(
    x: &Array4<f64>,
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
    m0: usize,
    mut col: ArrayViewMut2<f64>,
) {
    let (_, c_in, h, w) = x.dim();
    let m_len = col.ncols();
    for mm in 0..m_len {
        let m = m0 + mm;
        let n = m / (oh * ow);
        let rest = m % (oh * ow);
        let (oy, ox) = (rest / ow, rest % ow);
        let base_y = (oy * stride) as isize - pad as isize;
        let base_x = (ox * stride) as isize - pad as isize;
        let mut r = 0;
        for c in 0..c_in {
            for ky in 0..k {
                let iy = base_y + ky as isize;
                if iy < 0 || iy >= h as isize {
                    for _ in 0..k {
                        col[(r, mm)] = 0.0;
                        r += 1;
                    }
                    continue;
                }
                for kx in 0..k {
                    let ix = base_x + kx as isize;
                    col[(r, mm)] = if ix < 0 || ix >= w as isize {
                        0.0
                    } else {
                        x[(n, c, iy as usize, ix as usize)]
                    };
                    r += 1;
                }
            }
        }
    }
}

/// Scatter-adds `col` (CKK × m_len) back into `dx` — adjoint of
/// [`im2col_chunk`].
#[allow(clippy::too_many_arguments)]
fn col2im_chunk(
    col: &ArrayView2<f64>,
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
    m0: usize,
    dx: &mut Array4<f64>,
) {
    let (_, c_in, h, w) = dx.dim();
    for mm in 0..col.ncols() {
        let m = m0 + mm;
        let n = m / (oh * ow);
        let rest = m % (oh * ow);
        let (oy, ox) = (rest / ow, rest % ow);
        let base_y = (oy * stride) as isize - pad as isize;
        let base_x = (ox * stride) as isize - pad as isize;
        let mut r = 0;
        for c in 0..c_in {
            for ky in 0..k {
                let iy = base_y + ky as isize;
                for kx in 0..k {
                    let ix = base_x + kx as isize;
                    if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                        dx[(n, c, iy as usize, ix as usize)] += col[(r, mm)];
                    }
                    r += 1;
                }
            }
        }
    }
}

fn as_matrix(p: &Param, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), p.value.as_slice().expect("standard layout"))
        .expect("shape")
}

/// Standard 2-D convolution, zero padding.
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    frozen: bool,
    cache: Option<Array4<f64>>,
}

impl Conv2d {
    pub fn new(
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Conv2d {
        let fan_in = c_in * k * k;
        Conv2d {
            weight: Param::new(init::he_normal(&[c_out, c_in, k, k], fan_in, rng)),
            bias: Param::new(init::zeros(&[c_out])),
            k,
            stride,
            pad,
            frozen: false,
            cache: None,
        }
    }

    fn dims(&self) -> (usize, usize) {
        let sh = self.weight.value.shape();
        (sh[0], sh[1])
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Array4<f64>, _mode: Mode) -> Array4<f64> {
        let (n, c_in, h, w) = x.dim();
        let (c_out, c_in_w) = self.dims();
        assert_eq!(c_in, c_in_w, "conv input channels");
        let oh = conv_out_size(h, self.k, self.stride, self.pad);
        let ow = conv_out_size(w, self.k, self.stride, self.pad);
        let ckk = c_in * self.k * self.k;
        let w_mat = as_matrix(&self.weight, c_out, ckk);

        let total = n * oh * ow;
        let chunk = chunk_len(ckk, total, ow);
        let mut out = Array4::<f64>::zeros((n, c_out, oh, ow));
        let mut col = Array2::<f64>::zeros((ckk, chunk));
        let mut m0 = 0;
        while m0 < total {
            let m_len = chunk.min(total - m0);
            let mut col_v = col.slice_mut(s![.., 0..m_len]);
            im2col_chunk(x, self.k, self.stride, self.pad, (oh, ow), m0, col_v.view_mut());
            let y = w_mat.dot(&col_v.view());
            for mm in 0..m_len {
                let m = m0 + mm;
                let nn = m / (oh * ow);
                let rest = m % (oh * ow);
                let (oy, ox) = (rest / ow, rest % ow);
                for f in 0..c_out {
                    out[(nn, f, oy, ox)] = y[(f, mm)] + self.bias.value[f];
                }
            }
            m0 += m_len;
        }
        self.cache = Some(x.clone());
        out
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let x = self.cache.as_ref().expect("forward before backward");
        let (n, c_in, h, w) = x.dim();
        let (c_out, _) = self.dims();
        let (_, _, oh, ow) = grad_out.dim();
        let ckk = c_in * self.k * self.k;
        let w_mat = as_matrix(&self.weight, c_out, ckk).to_owned();

        let total = n * oh * ow;
        let chunk = chunk_len(ckk, total, ow);
        let mut dx = Array4::<f64>::zeros((n, c_in, h, w));
        let mut col = Array2::<f64>::zeros((ckk, chunk));
        let mut g_mat = Array2::<f64>::zeros((c_out, chunk));
        let mut dw_acc = Array2::<f64>::zeros((c_out, ckk));
        let mut db_acc = vec![0.0; c_out];
        let mut m0 = 0;
        while m0 < total {
            let m_len = chunk.min(total - m0);
            for mm in 0..m_len {
                let m = m0 + mm;
                let nn = m / (oh * ow);
                let rest = m % (oh * ow);
                let (oy, ox) = (rest / ow, rest % ow);
                for f in 0..c_out {
                    let g = grad_out[(nn, f, oy, ox)];
                    g_mat[(f, mm)] = g;
                }
            }
            let g_v = g_mat.slice(s![.., 0..m_len]);
            if !self.frozen {
                let mut col_v = col.slice_mut(s![.., 0..m_len]);
                im2col_chunk(x, self.k, self.stride, self.pad, (oh, ow), m0, col_v.view_mut());
                dw_acc = dw_acc + g_v.dot(&col_v.view().t());
                for f in 0..c_out {
                    db_acc[f] += g_v.row(f).sum();
                }
            }
            let dcol = w_mat.t().dot(&g_v);
            col2im_chunk(&dcol.view(), self.k, self.stride, self.pad, (oh, ow), m0, &mut dx);
            m0 += m_len;
        }
        if !self.frozen {
            let dw_flat = self.weight.grad.as_slice_mut().expect("layout");
            for (d, s) in dw_flat.iter_mut().zip(dw_acc.iter()) {
                *d += s;
            }
            for (f, v) in db_acc.iter().enumerate() {
                self.bias.grad[f] += v;
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

/// Transposed convolution (fractionally strided). Weight layout
/// `(c_in, c_out, k, k)`; output size `(H-1)·s - 2p + k + output_padding`.
pub struct ConvTranspose2d {
    pub weight: Param,
    pub bias: Param,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub output_padding: usize,
    frozen: bool,
    cache: Option<Array4<f64>>,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        output_padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> ConvTranspose2d {
        assert!(output_padding < stride, "output_padding must be < stride");
        let fan_in = c_in * k * k;
        ConvTranspose2d {
            weight: Param::new(init::he_normal(&[c_in, c_out, k, k], fan_in, rng)),
            bias: Param::new(init::zeros(&[c_out])),
            k,
            stride,
            pad,
            output_padding,
            frozen: false,
            cache: None,
        }
    }

    fn dims(&self) -> (usize, usize) {
        let sh = self.weight.value.shape();
        (sh[0], sh[1])
    }

    pub fn out_size(&self, input: usize) -> usize {
        (input - 1) * self.stride + self.k + self.output_padding - 2 * self.pad
    }
}

impl Layer for ConvTranspose2d {
    fn forward(&mut self, x: &Array4<f64>, _mode: Mode) -> Array4<f64> {
        let (n, c_in, h, w) = x.dim();
        let (c_in_w, c_out) = self.dims();
        assert_eq!(c_in, c_in_w, "transposed conv input channels");
        let (oh, ow) = (self.out_size(h), self.out_size(w));
        let ckk = c_out * self.k * self.k;
        // Weight as (c_in, c_out·k·k).
        let w_mat = as_matrix(&self.weight, c_in, ckk);

        let total = n * h * w;
        let chunk = chunk_len(ckk, total, w);
        let mut out = Array4::<f64>::zeros((n, c_out, oh, ow));
        let mut x_mat = Array2::<f64>::zeros((c_in, chunk));
        let mut m0 = 0;
        while m0 < total {
            let m_len = chunk.min(total - m0);
            for mm in 0..m_len {
                let m = m0 + mm;
                let nn = m / (h * w);
                let rest = m % (h * w);
                let (iy, ix) = (rest / w, rest % w);
                for c in 0..c_in {
                    x_mat[(c, mm)] = x[(nn, c, iy, ix)];
                }
            }
            // (c_out·k·k, m_len): contributions scattered by conv geometry.
            let dcol = w_mat.t().dot(&x_mat.slice(s![.., 0..m_len]));
            col2im_chunk(
                &dcol.view(),
                self.k,
                self.stride,
                self.pad,
                (h, w),
                m0,
                &mut out,
            );
            m0 += m_len;
        }
        for f in 0..c_out {
            let b = self.bias.value[f];
            out.slice_mut(s![.., f, .., ..]).mapv_inplace(|v| v + b);
        }
        self.cache = Some(x.clone());
        out
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let x = self.cache.as_ref().expect("forward before backward");
        let (n, c_in, h, w) = x.dim();
        let (_, c_out) = self.dims();
        let ckk = c_out * self.k * self.k;
        let w_mat = as_matrix(&self.weight, c_in, ckk).to_owned();

        let total = n * h * w;
        let chunk = chunk_len(ckk, total, w);
        let mut dx = Array4::<f64>::zeros((n, c_in, h, w));
        let mut col_g = Array2::<f64>::zeros((ckk, chunk));
        let mut x_mat = Array2::<f64>::zeros((c_in, chunk));
        let mut dw_acc = Array2::<f64>::zeros((c_in, ckk));
        let mut m0 = 0;
        while m0 < total {
            let m_len = chunk.min(total - m0);
            let mut col_v = col_g.slice_mut(s![.., 0..m_len]);
            // im2col over grad_out with the equivalent-conv geometry maps
            // output positions back onto input positions.
            im2col_chunk(
                grad_out,
                self.k,
                self.stride,
                self.pad,
                (h, w),
                m0,
                col_v.view_mut(),
            );
            let dx_mat = w_mat.dot(&col_v.view());
            for mm in 0..m_len {
                let m = m0 + mm;
                let nn = m / (h * w);
                let rest = m % (h * w);
                let (iy, ix) = (rest / w, rest % w);
                for c in 0..c_in {
                    dx[(nn, c, iy, ix)] = dx_mat[(c, mm)];
                }
            }
            if !self.frozen {
                for mm in 0..m_len {
                    let m = m0 + mm;
                    let nn = m / (h * w);
                    let rest = m % (h * w);
                    let (iy, ix) = (rest / w, rest % w);
                    for c in 0..c_in {
                        x_mat[(c, mm)] = x[(nn, c, iy, ix)];
                    }
                }
                dw_acc = dw_acc + x_mat.slice(s![.., 0..m_len]).dot(&col_v.view().t());
            }
            m0 += m_len;
        }
        if !self.frozen {
            let dw_flat = self.weight.grad.as_slice_mut().expect("layout");
            for (d, s) in dw_flat.iter_mut().zip(dw_acc.iter()) {
                *d += s;
            }
            for f in 0..c_out {
                self.bias.grad[f] += grad_out.slice(s![.., f, .., ..]).sum();
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

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::{Rng, SeedableRng};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    /// Direct nested-loop convolution oracle.
    fn conv_oracle(
        x: &Array4<f64>,
        wgt: &Param,
        b: &Param,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Array4<f64> {
        let (n, c_in, h, w) = x.dim();
        let c_out = wgt.value.shape()[0];
        let oh = conv_out_size(h, k, stride, pad);
        let ow = conv_out_size(w, k, stride, pad);
        let mut out = Array4::<f64>::zeros((n, c_out, oh, ow));
        for nn in 0..n {
            for f in 0..c_out {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.value[f];
                        for c in 0..c_in {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                        acc += wgt.value[[f, c, ky, kx]]
                                            * x[(nn, c, iy as usize, ix as usize)];
                                    }
                                }
                            }
                        }
                        out[(nn, f, oy, ox)] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_nested_loop_oracle() {
        let mut r = rng();
        for (stride, pad) in [(1, 0), (1, 1), (2, 1), (1, 2)] {
            let mut conv = Conv2d::new(3, 5, 3, stride, pad, &mut r);
            let x = Array4::from_shape_fn((2, 3, 8, 9), |_| r.gen::<f64>() - 0.5);
            let got = conv.forward(&x, Mode::Train);
            let want = conv_oracle(&x, &conv.weight, &conv.bias, 3, stride, pad);
            assert_eq!(got.dim(), want.dim());
            for (a, b) in got.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-10, "stride={stride} pad={pad}");
            }
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <conv(x), g> == <x, conv_backward(g)> for bias-free linear part.
        let mut r = rng();
        let mut conv = Conv2d::new(2, 4, 4, 2, 1, &mut r);
        conv.bias.value.fill(0.0);
        let x = Array4::from_shape_fn((2, 2, 8, 8), |_| r.gen::<f64>() - 0.5);
        let y = conv.forward(&x, Mode::Train);
        let g = Array4::from_shape_fn(y.raw_dim(), |_| r.gen::<f64>() - 0.5);
        let dx = conv.backward(&g);
        let lhs: f64 = y.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(dx.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn conv_weight_grad_matches_finite_difference() {
        let mut r = rng();
        let mut conv = Conv2d::new(2, 3, 3, 1, 1, &mut r);
        let x = Array4::from_shape_fn((1, 2, 6, 6), |_| r.gen::<f64>() - 0.5);
        let y = conv.forward(&x, Mode::Train);
        let g = Array4::from_elem(y.raw_dim(), 1.0);
        conv.backward(&g);
        let grad = conv.weight.grad.clone();
        let h = 1e-6;
        for idx in [[0usize, 0, 0, 0], [2, 1, 2, 2], [1, 0, 1, 2]] {
            let orig = conv.weight.value[idx.as_slice()];
            conv.weight.value[idx.as_slice()] = orig + h;
            let fp: f64 = conv.forward(&x, Mode::Train).sum();
            conv.weight.value[idx.as_slice()] = orig - h;
            let fm: f64 = conv.forward(&x, Mode::Train).sum();
            conv.weight.value[idx.as_slice()] = orig;
            let num = (fp - fm) / (2.0 * h);
            let ana = grad[idx.as_slice()];
            assert!((num - ana).abs() < 1e-5, "{num} vs {ana}");
        }
    }

    #[test]
    fn frozen_conv_skips_param_grads_but_props_input() {
        let mut r = rng();
        let mut conv = Conv2d::new(2, 3, 3, 1, 1, &mut r);
        conv.set_frozen(true);
        let x = Array4::from_shape_fn((1, 2, 6, 6), |_| r.gen::<f64>() - 0.5);
        let y = conv.forward(&x, Mode::Train);
        let dx = conv.backward(&Array4::from_elem(y.raw_dim(), 1.0));
        assert!(conv.weight.grad.iter().all(|&v| v == 0.0));
        assert!(dx.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn transposed_conv_doubles_spatial_size() {
        let mut r = rng();
        let mut tc = ConvTranspose2d::new(4, 2, 3, 2, 1, 1, &mut r);
        let x = Array4::from_shape_fn((1, 4, 8, 8), |_| r.gen::<f64>() - 0.5);
        let y = tc.forward(&x, Mode::Train);
        assert_eq!(y.dim(), (1, 2, 16, 16));
    }

    /// Direct gather oracle for transposed conv.
    fn convt_oracle(x: &Array4<f64>, tc: &ConvTranspose2d) -> Array4<f64> {
        let (n, c_in, h, w) = x.dim();
        let c_out = tc.weight.value.shape()[1];
        let (oh, ow) = (tc.out_size(h), tc.out_size(w));
        let mut out = Array4::<f64>::zeros((n, c_out, oh, ow));
        for nn in 0..n {
            for c in 0..c_in {
                for iy in 0..h {
                    for ix in 0..w {
                        let v = x[(nn, c, iy, ix)];
                        for f in 0..c_out {
                            for ky in 0..tc.k {
                                for kx in 0..tc.k {
                                    let oy = (iy * tc.stride + ky) as isize - tc.pad as isize;
                                    let ox = (ix * tc.stride + kx) as isize - tc.pad as isize;
                                    if oy >= 0 && oy < oh as isize && ox >= 0 && ox < ow as isize {
                                        out[(nn, f, oy as usize, ox as usize)] +=
                                            v * tc.weight.value[[c, f, ky, kx]];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        for f in 0..c_out {
            let b = tc.bias.value[f];
            out.slice_mut(s![.., f, .., ..]).mapv_inplace(|v| v + b);
        }
        out
    }

    #[test]
    fn transposed_conv_matches_scatter_oracle() {
        let mut r = rng();
        let mut tc = ConvTranspose2d::new(3, 2, 3, 2, 1, 1, &mut r);
        let x = Array4::from_shape_fn((2, 3, 5, 6), |_| r.gen::<f64>() - 0.5);
        let got = tc.forward(&x, Mode::Train);
        let want = convt_oracle(&x, &tc);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn transposed_conv_backward_is_adjoint() {
        let mut r = rng();
        let mut tc = ConvTranspose2d::new(3, 2, 3, 2, 1, 1, &mut r);
        tc.bias.value.fill(0.0);
        let x = Array4::from_shape_fn((1, 3, 6, 6), |_| r.gen::<f64>() - 0.5);
        let y = tc.forward(&x, Mode::Train);
        let g = Array4::from_shape_fn(y.raw_dim(), |_| r.gen::<f64>() - 0.5);
        let dx = tc.backward(&g);
        let lhs: f64 = y.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(dx.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn transposed_conv_weight_grad_finite_difference() {
        let mut r = rng();
        let mut tc = ConvTranspose2d::new(2, 2, 3, 2, 1, 1, &mut r);
        let x = Array4::from_shape_fn((1, 2, 4, 4), |_| r.gen::<f64>() - 0.5);
        let y = tc.forward(&x, Mode::Train);
        tc.backward(&Array4::from_elem(y.raw_dim(), 1.0));
        let grad = tc.weight.grad.clone();
        let h = 1e-6;
        for idx in [[0usize, 0, 0, 0], [1, 1, 2, 1], [0, 1, 1, 2]] {
            let orig = tc.weight.value[idx.as_slice()];
            tc.weight.value[idx.as_slice()] = orig + h;
            let fp: f64 = tc.forward(&x, Mode::Train).sum();
            tc.weight.value[idx.as_slice()] = orig - h;
            let fm: f64 = tc.forward(&x, Mode::Train).sum();
            tc.weight.value[idx.as_slice()] = orig;
            let num = (fp - fm) / (2.0 * h);
            assert!((num - grad[idx.as_slice()]).abs() < 1e-5);
        }
    }
}
