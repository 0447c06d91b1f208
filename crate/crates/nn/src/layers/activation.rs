//! Pointwise activations.

use ndarray::Array4;

use crate::module::{Layer, Mode, Param};

/// Rectified linear unit.
#[derive(Default)]
pub struct ReLU {
    mask: Option<Array4<f64>>,
}

impl ReLU {
    pub fn new() -> ReLU {
        ReLU::default()
    }
}

impl Layer for ReLU {
    fn forward(&mut self, x: &Array4<f64>, _mode: Mode) -> Array4<f64> {
        let mask = x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let out = x * &mask;
        self.mask = Some(mask);
        out
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        grad_out * self.mask.as_ref().expect("forward before backward")
    }

    fn visit_params(&mut self, _f: &mut dyn FnMut(&str, &mut Param)) {}

    fn set_frozen(&mut self, _frozen: bool) {}
}

/// Leaky ReLU with fixed negative slope.
pub struct LeakyReLU {
    pub slope: f64,
    mask: Option<Array4<f64>>,
}

impl LeakyReLU {
    pub fn new(slope: f64) -> LeakyReLU {
        LeakyReLU { slope, mask: None }
    }
}

impl Layer for LeakyReLU {
    fn forward(&mut self, x: &Array4<f64>, _mode: Mode) -> Array4<f64> {
        let slope = self.slope;
        let mask = x.mapv(|v| if v > 0.0 { 1.0 } else { slope });
        let out = x * &mask;
        self.mask = Some(mask);
        out
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        grad_out * self.mask.as_ref().expect("forward before backward")
    }

    fn visit_params(&mut self, _f: &mut dyn FnMut(&str, &mut Param)) {}

    fn set_frozen(&mut self, _frozen: bool) {}
}

/// Tanh squashed into [0, 1]: `y = (tanh(x) + 1) / 2`.
#[derive(Default)]
pub struct Tanh01 {
    out: Option<Array4<f64>>,
}

impl Tanh01 {
    pub fn new() -> Tanh01 {
        Tanh01::default()
    }
}

impl Layer for Tanh01 {
    fn forward(&mut self, x: &Array4<f64>, _mode: Mode) -> Array4<f64> {
        let out = x.mapv(|v| 0.5 * (v.tanh() + 1.0));
        self.out = Some(out.clone());
        out
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        // dy/dx = (1 - tanh²) / 2 = 2·y·(1 - y).
        let y = self.out.as_ref().expect("forward before backward");
        grad_out * &y.mapv(|v| 2.0 * v * (1.0 - v))
    }

    fn visit_params(&mut self, _f: &mut dyn FnMut(&str, &mut Param)) {}

    fn set_frozen(&mut self, _frozen: bool) {}
}
