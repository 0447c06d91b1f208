//! Periodized orthogonal wavelet transform (8-tap Daubechies).
//!
//! Periodization keeps the transform orthonormal for any even length, which
//! gives exact Parseval energy accounting and perfect reconstruction — both
//! load-bearing for the Wiener residual extractor.

use ndarray::Array2;

/// 8-tap Daubechies scaling filter (4 vanishing moments), the classic choice
/// for sensor-noise extraction. Sums to √2, unit energy.
pub const DB8: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

/// Quadrature mirror filter: `g[k] = (-1)^k h[L-1-k]`.
pub fn qmf(h: &[f64; 8]) -> [f64; 8] {
    let mut g = [0.0; 8];
    for k in 0..8 {
        g[k] = if k % 2 == 0 { h[7 - k] } else { -h[7 - k] };
    }
    g
}

/// One analysis level: `(approx, detail)`, each of length `n/2`.
/// `a[i] = Σ_k h[k]·s[(2i+k) mod n]`, `d[i]` likewise with `g`.
pub fn dwt1d(signal: &[f64], h: &[f64; 8], g: &[f64; 8]) -> (Vec<f64>, Vec<f64>) {
    let n = signal.len();
    assert!(n >= 2 && n % 2 == 0, "periodized DWT needs even length, got {n}");
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for i in 0..half {
        let mut sa = 0.0;
        let mut sd = 0.0;
        for k in 0..8 {
            let v = signal[(2 * i + k) % n];
            sa += h[k] * v;
            sd += g[k] * v;
        }
        a[i] = sa;
        d[i] = sd;
    }
    (a, d)
}

/// One synthesis level; exact inverse of [`dwt1d`] (adjoint of an orthonormal
/// analysis operator).
pub fn idwt1d(a: &[f64], d: &[f64], h: &[f64; 8], g: &[f64; 8]) -> Vec<f64> {
    assert_eq!(a.len(), d.len());
    let n = 2 * a.len();
    let mut s = vec![0.0; n];
    for i in 0..a.len() {
        for k in 0..8 {
            s[(2 * i + k) % n] += a[i] * h[k] + d[i] * g[k];
        }
    }
    s
}

/// Detail bands of one 2-D level. Orientation naming follows the
/// (row-filter, column-filter) order: `lh` = low rows / high cols, etc.
#[derive(Debug, Clone)]
pub struct DetailBands {
    pub lh: Array2<f64>,
    pub hl: Array2<f64>,
    pub hh: Array2<f64>,
}

/// Multi-level 2-D decomposition. `details[0]` is the finest level.
#[derive(Debug, Clone)]
pub struct Dwt2d {
    pub approx: Array2<f64>,
    pub details: Vec<DetailBands>,
}

impl Dwt2d {
    /// Total squared magnitude of all detail coefficients.
    pub fn detail_energy(&self) -> f64 {
        self.details
            .iter()
            .map(|b| {
                b.lh.iter().map(|v| v * v).sum::<f64>()
                    + b.hl.iter().map(|v| v * v).sum::<f64>()
                    + b.hh.iter().map(|v| v * v).sum::<f64>()
            })
            .sum()
    }
}

fn transform_rows(x: &Array2<f64>, h: &[f64; 8], g: &[f64; 8]) -> (Array2<f64>, Array2<f64>) {
    let (rows, cols) = x.dim();
    let mut lo = Array2::zeros((rows, cols / 2));
    let mut hi = Array2::zeros((rows, cols / 2));
    let mut buf = vec![0.0; cols];
    for r in 0..rows {
        for (c, v) in buf.iter_mut().enumerate() {
            *v = x[(r, c)];
        }
        let (a, d) = dwt1d(&buf, h, g);
        for c in 0..cols / 2 {
            lo[(r, c)] = a[c];
            hi[(r, c)] = d[c];
        }
    }
    (lo, hi)
}

fn transform_cols(x: &Array2<f64>, h: &[f64; 8], g: &[f64; 8]) -> (Array2<f64>, Array2<f64>) {
    let (rows, cols) = x.dim();
    let mut lo = Array2::zeros((rows / 2, cols));
    let mut hi = Array2::zeros((rows / 2, cols));
    let mut buf = vec![0.0; rows];
    for c in 0..cols {
        for (r, v) in buf.iter_mut().enumerate() {
            *v = x[(r, c)];
        }
        let (a, d) = dwt1d(&buf, h, g);
        for r in 0..rows / 2 {
            lo[(r, c)] = a[r];
            hi[(r, c)] = d[r];
        }
    }
    (lo, hi)
}

fn inverse_cols(lo: &Array2<f64>, hi: &Array2<f64>, h: &[f64; 8], g: &[f64; 8]) -> Array2<f64> {
    let (half, cols) = lo.dim();
    let mut out = Array2::zeros((half * 2, cols));
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for c in 0..cols {
        for r in 0..half {
            a[r] = lo[(r, c)];
            d[r] = hi[(r, c)];
        }
        let s = idwt1d(&a, &d, h, g);
        for (r, v) in s.iter().enumerate() {
            out[(r, c)] = *v;
        }
    }
    out
}

fn inverse_rows(lo: &Array2<f64>, hi: &Array2<f64>, h: &[f64; 8], g: &[f64; 8]) -> Array2<f64> {
    let (rows, half) = lo.dim();
    let mut out = Array2::zeros((rows, half * 2));
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for r in 0..rows {
        for c in 0..half {
            a[c] = lo[(r, c)];
            d[c] = hi[(r, c)];
        }
        let s = idwt1d(&a, &d, h, g);
        for (c, v) in s.iter().enumerate() {
            out[(r, c)] = *v;
        }
    }
    out
}

/// `levels`-deep 2-D decomposition; both sides must be divisible by
/// `2^levels`.
pub fn dwt2d(x: &Array2<f64>, levels: usize) -> Dwt2d {
    let h = DB8;
    let g = qmf(&h);
    let (rows, cols) = x.dim();
    let div = 1 << levels;
    assert!(
        rows % div == 0 && cols % div == 0,
        "{rows}x{cols} not divisible by 2^{levels}"
    );
    let mut approx = x.clone();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (rl, rh) = transform_rows(&approx, &h, &g);
        let (ll, lh) = transform_cols(&rl, &h, &g);
        let (hl, hh) = transform_cols(&rh, &h, &g);
        details.push(DetailBands { lh, hl, hh });
        approx = ll;
    }
    Dwt2d { approx, details }
}

/// Inverse of [`dwt2d`].
pub fn idwt2d(t: &Dwt2d) -> Array2<f64> {
    let h = DB8;
    let g = qmf(&h);
    let mut approx = t.approx.clone();
    for band in t.details.iter().rev() {
        let rl = inverse_cols(&approx, &band.lh, &h, &g);
        let rh = inverse_cols(&band.hl, &band.hh, &h, &g);
        approx = inverse_rows(&rl, &rh, &h, &g);
    }
    approx
}
