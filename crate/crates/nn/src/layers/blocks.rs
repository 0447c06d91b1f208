//! Composite blocks: residual units and densely connected layers.

use ndarray::{Array4, ArrayD, Axis, concatenate, s};
use rand_chacha::ChaCha8Rng;

use crate::layers::activation::ReLU;
use crate::layers::conv::Conv2d;
use crate::layers::norm::{BatchNorm2d, InstanceNorm2d};
use crate::layers::pool::AvgPool2d;
use crate::module::{Layer, Mode, Param, Stack};

/// Instance-normalized residual block used by image-to-image trunks:
/// conv–IN–ReLU–conv–IN plus identity, no activation after the sum.
pub struct ResidualBlock {
    body: Stack,
}

impl ResidualBlock {
    pub fn new(channels: usize, rng: &mut ChaCha8Rng) -> ResidualBlock {
        let body = Stack::new()
            .with("conv1", Conv2d::new(channels, channels, 3, 1, 1, rng))
            .with("in1", InstanceNorm2d::new(channels))
            .with("relu", ReLU::new())
            .with("conv2", Conv2d::new(channels, channels, 3, 1, 1, rng))
            .with("in2", InstanceNorm2d::new(channels));
        ResidualBlock { body }
    }
}

impl Layer for ResidualBlock {
    fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        self.body.forward(x, mode) + x
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        self.body.backward(grad_out) + grad_out
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.body.visit_params(&mut |n, p| f(&format!("body.{n}"), p));
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.body.visit_buffers(&mut |n, b| f(&format!("body.{n}"), b));
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.body.set_frozen(frozen);
    }
}

/// Batch-normalized residual block (two 3×3 convs) with an optional
/// projection shortcut and a ReLU after the sum.
pub struct BasicBlock {
    main: Stack,
    shortcut: Option<Stack>,
    post: ReLU,
}

impl BasicBlock {
    pub fn new(c_in: usize, c_out: usize, stride: usize, rng: &mut ChaCha8Rng) -> BasicBlock {
        let main = Stack::new()
            .with("conv1", Conv2d::new(c_in, c_out, 3, stride, 1, rng))
            .with("bn1", BatchNorm2d::new(c_out))
            .with("relu", ReLU::new())
            .with("conv2", Conv2d::new(c_out, c_out, 3, 1, 1, rng))
            .with("bn2", BatchNorm2d::new(c_out));
        let shortcut = if stride != 1 || c_in != c_out {
            Some(
                Stack::new()
                    .with("conv", Conv2d::new(c_in, c_out, 1, stride, 0, rng))
                    .with("bn", BatchNorm2d::new(c_out)),
            )
        } else {
            None
        };
        BasicBlock { main, shortcut, post: ReLU::new() }
    }
}

impl Layer for BasicBlock {
    fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let m = self.main.forward(x, mode);
        let sum = match self.shortcut.as_mut() {
            Some(sc) => m + sc.forward(x, mode),
            None => m + x,
        };
        self.post.forward(&sum, mode)
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let g = self.post.backward(grad_out);
        let gx_main = self.main.backward(&g);
        match self.shortcut.as_mut() {
            Some(sc) => gx_main + sc.backward(&g),
            None => gx_main + g,
        }
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.main.visit_params(&mut |n, p| f(&format!("main.{n}"), p));
        if let Some(sc) = self.shortcut.as_mut() {
            sc.visit_params(&mut |n, p| f(&format!("short.{n}"), p));
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.main.visit_buffers(&mut |n, b| f(&format!("main.{n}"), b));
        if let Some(sc) = self.shortcut.as_mut() {
            sc.visit_buffers(&mut |n, b| f(&format!("short.{n}"), b));
        }
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.main.set_frozen(frozen);
        if let Some(sc) = self.shortcut.as_mut() {
            sc.set_frozen(frozen);
        }
    }
}

/// 1×1–3×3–1×1 residual block with 4× channel expansion.
pub struct Bottleneck {
    main: Stack,
    shortcut: Option<Stack>,
    post: ReLU,
}

impl Bottleneck {
    pub const EXPANSION: usize = 4;

    pub fn new(c_in: usize, mid: usize, stride: usize, rng: &mut ChaCha8Rng) -> Bottleneck {
        let c_out = mid * Self::EXPANSION;
        let main = Stack::new()
            .with("conv1", Conv2d::new(c_in, mid, 1, 1, 0, rng))
            .with("bn1", BatchNorm2d::new(mid))
            .with("relu1", ReLU::new())
            .with("conv2", Conv2d::new(mid, mid, 3, stride, 1, rng))
            .with("bn2", BatchNorm2d::new(mid))
            .with("relu2", ReLU::new())
            .with("conv3", Conv2d::new(mid, c_out, 1, 1, 0, rng))
            .with("bn3", BatchNorm2d::new(c_out));
        let shortcut = if stride != 1 || c_in != c_out {
            Some(
                Stack::new()
                    .with("conv", Conv2d::new(c_in, c_out, 1, stride, 0, rng))
                    .with("bn", BatchNorm2d::new(c_out)),
            )
        } else {
            None
        };
        Bottleneck { main, shortcut, post: ReLU::new() }
    }
}

impl Layer for Bottleneck {
    fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let m = self.main.forward(x, mode);
        let sum = match self.shortcut.as_mut() {
            Some(sc) => m + sc.forward(x, mode),
            None => m + x,
        };
        self.post.forward(&sum, mode)
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let g = self.post.backward(grad_out);
        let gx_main = self.main.backward(&g);
        match self.shortcut.as_mut() {
            Some(sc) => gx_main + sc.backward(&g),
            None => gx_main + g,
        }
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.main.visit_params(&mut |n, p| f(&format!("main.{n}"), p));
        if let Some(sc) = self.shortcut.as_mut() {
            sc.visit_params(&mut |n, p| f(&format!("short.{n}"), p));
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.main.visit_buffers(&mut |n, b| f(&format!("main.{n}"), b));
        if let Some(sc) = self.shortcut.as_mut() {
            sc.visit_buffers(&mut |n, b| f(&format!("short.{n}"), b));
        }
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.main.set_frozen(frozen);
        if let Some(sc) = self.shortcut.as_mut() {
            sc.set_frozen(frozen);
        }
    }
}

/// Densely connected block: each inner layer sees the concatenation of the
/// block input and all previous layer outputs, and contributes `growth`
/// channels.
pub struct DenseBlock {
    layers: Vec<Stack>,
    growth: usize,
    c_in: usize,
}

impl DenseBlock {
    pub fn new(c_in: usize, growth: usize, n_layers: usize, rng: &mut ChaCha8Rng) -> DenseBlock {
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let cin_i = c_in + i * growth;
            layers.push(
                Stack::new()
                    .with("bn1", BatchNorm2d::new(cin_i))
                    .with("relu1", ReLU::new())
                    .with("conv1", Conv2d::new(cin_i, 4 * growth, 1, 1, 0, rng))
                    .with("bn2", BatchNorm2d::new(4 * growth))
                    .with("relu2", ReLU::new())
                    .with("conv2", Conv2d::new(4 * growth, growth, 3, 1, 1, rng)),
            );
        }
        DenseBlock { layers, growth, c_in }
    }

    pub fn out_channels(&self) -> usize {
        self.c_in + self.layers.len() * self.growth
    }
}

impl Layer for DenseBlock {
    fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let mut features = x.clone();
        for layer in self.layers.iter_mut() {
            let h = layer.forward(&features, mode);
            features = concatenate(Axis(1), &[features.view(), h.view()])
                .expect("concat")
                .as_standard_layout()
                .to_owned();
        }
        features
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let mut g = grad_out.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let split = self.c_in + i * self.growth;
            let g_tail = g.slice(s![.., split.., .., ..]).to_owned();
            let g_head = g.slice(s![.., ..split, .., ..]).to_owned();
            g = g_head + layer.backward(&g_tail);
        }
        g
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_params(&mut |n, p| f(&format!("dense{i}.{n}"), p));
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_buffers(&mut |n, b| f(&format!("dense{i}.{n}"), b));
        }
    }

    fn set_frozen(&mut self, frozen: bool) {
        for layer in self.layers.iter_mut() {
            layer.set_frozen(frozen);
        }
    }
}

/// DenseNet transition: BN–ReLU–1×1 conv–2×2 average pool.
pub fn transition(c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Stack {
    Stack::new()
        .with("bn", BatchNorm2d::new(c_in))
        .with("relu", ReLU::new())
        .with("conv", Conv2d::new(c_in, c_out, 1, 1, 0, rng))
        .with("pool", AvgPool2d::new(2))
}
