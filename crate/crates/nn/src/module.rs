//! Layer abstraction: explicit forward/backward with cached activations.
//!
//! Every layer owns its parameters and their gradient accumulators. A
//! backward call must follow the forward call whose activations it consumes;
//! layers panic otherwise rather than silently reusing stale caches.

use ndarray::{Array4, ArrayD};

/// A trainable tensor with its gradient accumulator. Optimizers skip
/// frozen params entirely (no update, no weight decay).
pub struct Param {
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    pub frozen: bool,
}

impl Param {
    pub fn new(value: ArrayD<f64>) -> Param {
        let grad = ArrayD::zeros(value.raw_dim());
        Param { value, grad, frozen: false }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Forward-pass mode; affects normalization statistics and nothing else.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A differentiable computation step over NCHW activations.
pub trait Layer {
    /// Computes the output, caching whatever the backward pass needs.
    fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64>;

    /// Propagates `grad_out` to the input gradient, accumulating parameter
    /// gradients along the way (unless frozen).
    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64>;

    /// Visits every trainable parameter with a locally unique name.
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param));

    /// Visits non-trainable state (e.g. running statistics) that must be
    /// serialized with the model but never touched by an optimizer.
    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {}

    /// Frozen layers still propagate input gradients but skip parameter
    /// gradient accumulation, and their params are marked so optimizers
    /// leave them untouched.
    fn set_frozen(&mut self, frozen: bool);
}

/// Convenience helpers over any [`Layer`].
pub trait LayerExt: Layer {
    fn zero_grad(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p| n += p.len());
        n
    }

    /// Qualified name → cloned value for every parameter.
    fn named_values(&mut self) -> Vec<(String, ArrayD<f64>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, p| out.push((name.to_string(), p.value.clone())));
        out
    }
}

impl<T: Layer + ?Sized> LayerExt for T {}

/// Sequential container. Parameter names are qualified as
/// `<layer name>.<param name>`.
pub struct Stack {
    layers: Vec<(String, Box<dyn Layer>)>,
}

impl Default for Stack {
    fn default() -> Self {
        Stack::new()
    }
}

impl Stack {
    pub fn new() -> Stack {
        Stack { layers: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, layer: impl Layer + 'static) {
        self.layers.push((name.into(), Box::new(layer)));
    }

    pub fn with(mut self, name: impl Into<String>, layer: impl Layer + 'static) -> Stack {
        self.push(name, layer);
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Mutable access to a named sub-layer (first match).
    pub fn layer_mut(&mut self, name: &str) -> Option<&mut Box<dyn Layer>> {
        self.layers
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, l)| l)
    }
}

impl Layer for Stack {
    fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let mut cur = x.clone();
        for (_, layer) in self.layers.iter_mut() {
            cur = layer.forward(&cur, mode);
        }
        cur
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let mut cur = grad_out.clone();
        for (_, layer) in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur);
        }
        cur
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        for (name, layer) in self.layers.iter_mut() {
            let prefix = name.clone();
            layer.visit_params(&mut |local, p| f(&format!("{prefix}.{local}"), p));
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        for (name, layer) in self.layers.iter_mut() {
            let prefix = name.clone();
            layer.visit_buffers(&mut |local, b| f(&format!("{prefix}.{local}"), b));
        }
    }

    fn set_frozen(&mut self, frozen: bool) {
        for (_, layer) in self.layers.iter_mut() {
            layer.set_frozen(frozen);
        }
    }
}
