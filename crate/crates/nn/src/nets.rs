//! Network definitions: conditional generator, matching-aware
//! discriminator, dual-stream evaluator, and the target-classifier zoo.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array4, ArrayD, Axis, concatenate, s};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::activation::{LeakyReLU, ReLU, Tanh01};
use crate::layers::blocks::{BasicBlock, Bottleneck, DenseBlock, ResidualBlock, transition};
use crate::layers::constrained::ConstrainedConv2d;
use crate::layers::conv::{Conv2d, ConvTranspose2d};
use crate::layers::linear::Linear;
use crate::layers::norm::{BatchNorm2d, InstanceNorm2d};
use crate::layers::pool::{GlobalAvgPool, MaxPool2d};
use crate::losses::softmax;
use crate::module::{Layer, Mode, Param, Stack};

/// Concatenates two activations along the channel axis.
pub fn concat_channels(a: &Array4<f64>, b: &Array4<f64>) -> Array4<f64> {
    concatenate(Axis(1), &[a.view(), b.view()])
        .expect("channel concat")
        .as_standard_layout()
        .to_owned()
}

/// One-hot condition planes: plane `targets[i]` of sample `i` is all ones.
/// Targets are 0-based here.
pub fn condition_planes(targets: &[usize], num_classes: usize, h: usize, w: usize) -> Array4<f64> {
    let mut cond = Array4::<f64>::zeros((targets.len(), num_classes, h, w));
    for (i, &t) in targets.iter().enumerate() {
        assert!(t < num_classes, "target {t} out of range for {num_classes} classes");
        cond.slice_mut(s![i, t, .., ..]).fill(1.0);
    }
    cond
}

fn max_downsample(x: &Array4<f64>, k: usize) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    assert!(h % k == 0 && w % k == 0, "downsample factor must divide dims");
    let mut out = Array4::<f64>::zeros((n, c, h / k, w / k));
    for nn in 0..n {
        for cc in 0..c {
            for oy in 0..h / k {
                for ox in 0..w / k {
                    let mut best = f64::NEG_INFINITY;
                    for ky in 0..k {
                        for kx in 0..k {
                            best = best.max(x[(nn, cc, oy * k + ky, ox * k + kx)]);
                        }
                    }
                    out[(nn, cc, oy, ox)] = best;
                }
            }
        }
    }
    out
}

/// Encoder–residual–decoder trunk shared by the generator and the evaluator
/// decomposition network: 7×7 stem, two stride-2 downsamples, residual
/// blocks at 4× width, two transposed-conv upsamples, 7×7 output head.
/// `final_tanh` selects a [0, 1] image head; without it the head is linear
/// (signed residual output).
pub fn build_residual_trunk(
    c_in: usize,
    width: usize,
    n_blocks: usize,
    final_tanh: bool,
    rng: &mut ChaCha8Rng,
) -> Stack {
    let w = width;
    let mut net = Stack::new()
        .with("conv1", Conv2d::new(c_in, w, 7, 1, 3, rng))
        .with("in1", InstanceNorm2d::new(w))
        .with("relu1", ReLU::new())
        .with("conv2", Conv2d::new(w, 2 * w, 3, 2, 1, rng))
        .with("in2", InstanceNorm2d::new(2 * w))
        .with("relu2", ReLU::new())
        .with("conv3", Conv2d::new(2 * w, 4 * w, 3, 2, 1, rng))
        .with("in3", InstanceNorm2d::new(4 * w))
        .with("relu3", ReLU::new());
    for i in 0..n_blocks {
        net.push(format!("res{}", i + 1), ResidualBlock::new(4 * w, rng));
    }
    net.push("deconv1", ConvTranspose2d::new(4 * w, 2 * w, 3, 2, 1, 1, rng));
    net.push("in4", InstanceNorm2d::new(2 * w));
    net.push("relu4", ReLU::new());
    net.push("deconv2", ConvTranspose2d::new(2 * w, w, 3, 2, 1, 1, rng));
    net.push("in5", InstanceNorm2d::new(w));
    net.push("relu5", ReLU::new());
    net.push("conv_out", Conv2d::new(w, 3, 7, 1, 3, rng));
    if final_tanh {
        net.push("tanh", Tanh01::new());
    }
    net
}

/// Conditional anonymizer network. As a [`Layer`] it consumes the channel
/// concatenation of the RGB input and the condition planes; use
/// [`Generator::forward_cond`] to pass them separately.
pub struct Generator {
    pub net: Stack,
    pub cond_channels: usize,
}

impl Generator {
    pub fn new(cond_channels: usize, width: usize, rng: &mut ChaCha8Rng) -> Generator {
        let net = build_residual_trunk(3 + cond_channels, width, 2, true, rng);
        Generator { net, cond_channels }
    }

    pub fn forward_cond(
        &mut self,
        x: &Array4<f64>,
        cond: &Array4<f64>,
        mode: Mode,
    ) -> Array4<f64> {
        assert_eq!(x.dim().1, 3, "generator image input must be RGB");
        assert_eq!(cond.dim().1, self.cond_channels, "condition plane count");
        self.forward(&concat_channels(x, cond), mode)
    }

    /// Input gradient restricted to the image channels.
    pub fn backward_image(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let g = self.net.backward(grad_out);
        g.slice(s![.., 0..3, .., ..]).as_standard_layout().to_owned()
    }
}

impl Layer for Generator {
    fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        assert_eq!(
            x.dim().1,
            3 + self.cond_channels,
            "generator expects image plus condition channels"
        );
        assert!(
            x.dim().2 % 4 == 0 && x.dim().3 % 4 == 0,
            "generator input dims must be divisible by 4"
        );
        self.net.forward(x, mode)
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        self.net.backward(grad_out)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.net.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.net.visit_buffers(f);
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.net.set_frozen(frozen);
    }
}

/// Matching-aware patch discriminator with a constrained first layer.
/// Condition planes are injected after the first downsample via 2×2 max
/// pooling and channel concatenation. As a [`Layer`] it consumes the
/// concatenation of image and full-resolution condition planes and emits a
/// patch score map.
pub struct Discriminator {
    pub constrained: ConstrainedConv2d,
    head: Stack,
    post: Stack,
    pub cond_channels: usize,
    pub width: usize,
}

impl Discriminator {
    /// Smallest valid (even) input side given the receptive chain.
    pub const MIN_INPUT: usize = 28;

    pub fn new(cond_channels: usize, width: usize, rng: &mut ChaCha8Rng) -> Discriminator {
        let w = width;
        let constrained = ConstrainedConv2d::new(3, 3, rng);
        let head = Stack::new()
            .with("conv1", Conv2d::new(3, w, 4, 2, 1, rng))
            .with("lrelu1", LeakyReLU::new(0.2));
        let post = Stack::new()
            .with("conv2", Conv2d::new(w + cond_channels, 2 * w, 4, 2, 1, rng))
            .with("in2", InstanceNorm2d::new(2 * w))
            .with("lrelu2", LeakyReLU::new(0.2))
            .with("conv3", Conv2d::new(2 * w, 4 * w, 4, 1, 0, rng))
            .with("in3", InstanceNorm2d::new(4 * w))
            .with("lrelu3", LeakyReLU::new(0.2))
            .with("conv4", Conv2d::new(4 * w, 1, 4, 1, 0, rng));
        Discriminator { constrained, head, post, cond_channels, width }
    }

    pub fn forward_cond(
        &mut self,
        x: &Array4<f64>,
        cond: &Array4<f64>,
        mode: Mode,
    ) -> Array4<f64> {
        assert_eq!(x.dim().1, 3, "discriminator image input must be RGB");
        assert_eq!(cond.dim().1, self.cond_channels, "condition plane count");
        self.forward(&concat_channels(x, cond), mode)
    }

    /// Input gradient restricted to the image channels.
    pub fn backward_image(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let g = self.backward(grad_out);
        g.slice(s![.., 0..3, .., ..]).as_standard_layout().to_owned()
    }

    /// Re-projects the constrained first layer; call after every optimizer
    /// step that touched the discriminator.
    pub fn project_constraints(&mut self) {
        self.constrained.project();
    }

    pub fn constraint_satisfied(&self, tol: f64) -> bool {
        self.constrained.satisfies_constraint(tol)
    }
}

impl Layer for Discriminator {
    fn forward(&mut self, x_aug: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let (_, c, h, w) = x_aug.dim();
        assert_eq!(c, 3 + self.cond_channels, "image plus condition channels");
        assert!(
            h >= Self::MIN_INPUT && w >= Self::MIN_INPUT && h % 2 == 0 && w % 2 == 0,
            "discriminator input must be even-sized and at least {}",
            Self::MIN_INPUT
        );
        let x = x_aug.slice(s![.., 0..3, .., ..]).as_standard_layout().to_owned();
        let residual = self.constrained.forward(&x, mode);
        let mut mid = self.head.forward(&residual, mode);
        if self.cond_channels > 0 {
            let cond = x_aug.slice(s![.., 3.., .., ..]).as_standard_layout().to_owned();
            mid = concat_channels(&mid, &max_downsample(&cond, 2));
        }
        self.post.forward(&mid, mode)
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let g_mid = self.post.backward(grad_out);
        let g_head = g_mid
            .slice(s![.., 0..self.width, .., ..])
            .as_standard_layout()
            .to_owned();
        let gx = self.constrained.backward(&self.head.backward(&g_head));
        let (n, _, h, w) = gx.dim();
        let mut full = Array4::<f64>::zeros((n, 3 + self.cond_channels, h, w));
        full.slice_mut(s![.., 0..3, .., ..]).assign(&gx);
        full
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.constrained
            .visit_params(&mut |n, p| f(&format!("constrained.{n}"), p));
        self.head.visit_params(&mut |n, p| f(&format!("head.{n}"), p));
        self.post.visit_params(&mut |n, p| f(&format!("post.{n}"), p));
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.head.visit_buffers(&mut |n, b| f(&format!("head.{n}"), b));
        self.post.visit_buffers(&mut |n, b| f(&format!("post.{n}"), b));
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.constrained.set_frozen(frozen);
        self.head.set_frozen(frozen);
        self.post.set_frozen(frozen);
    }
}

/// Supported target-classifier architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierArch {
    Resnet18,
    Resnet50,
    Densenet100,
    Vgg16,
    Small,
}

impl ClassifierArch {
    pub const ALL: [ClassifierArch; 5] = [
        ClassifierArch::Resnet18,
        ClassifierArch::Resnet50,
        ClassifierArch::Densenet100,
        ClassifierArch::Vgg16,
        ClassifierArch::Small,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierArch::Resnet18 => "resnet18",
            ClassifierArch::Resnet50 => "resnet50",
            ClassifierArch::Densenet100 => "densenet100",
            ClassifierArch::Vgg16 => "vgg16",
            ClassifierArch::Small => "small",
        }
    }
}

impl fmt::Display for ClassifierArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierArch {
    type Err = String;

    fn from_str(s: &str) -> Result<ClassifierArch, String> {
        ClassifierArch::ALL
            .iter()
            .find(|a| a.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown classifier architecture: {s}"))
    }
}

/// A camera-model classifier: optional constrained front end plus a
/// convolutional body ending in global average pooling and a linear head.
pub struct TargetClassifier {
    pub constrained: Option<ConstrainedConv2d>,
    pub net: Stack,
    pub arch: ClassifierArch,
    pub num_classes: usize,
}

impl TargetClassifier {
    pub fn project_constraints(&mut self) {
        if let Some(cc) = self.constrained.as_mut() {
            cc.project();
        }
    }

    pub fn constraint_satisfied(&self, tol: f64) -> bool {
        self.constrained
            .as_ref()
            .map_or(true, |cc| cc.satisfies_constraint(tol))
    }
}

impl Layer for TargetClassifier {
    fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        match self.constrained.as_mut() {
            Some(cc) => {
                let r = cc.forward(x, mode);
                self.net.forward(&r, mode)
            }
            None => self.net.forward(x, mode),
        }
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let g = self.net.backward(grad_out);
        match self.constrained.as_mut() {
            Some(cc) => cc.backward(&g),
            None => g,
        }
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        if let Some(cc) = self.constrained.as_mut() {
            cc.visit_params(&mut |n, p| f(&format!("cc.{n}"), p));
        }
        self.net.visit_params(&mut |n, p| f(&format!("net.{n}"), p));
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.net.visit_buffers(&mut |n, b| f(&format!("net.{n}"), b));
    }

    fn set_frozen(&mut self, frozen: bool) {
        if let Some(cc) = self.constrained.as_mut() {
            cc.set_frozen(frozen);
        }
        self.net.set_frozen(frozen);
    }
}

/// Builds a classifier body for `arch`. `width` scales all channel counts
/// (the DenseNet growth rate equals `width`); standard configurations use
/// width 64 (growth 12 for DenseNet).
pub fn build_target_classifier(
    arch: ClassifierArch,
    num_classes: usize,
    in_channels: usize,
    width: usize,
    with_constrained: bool,
    rng: &mut ChaCha8Rng,
) -> TargetClassifier {
    let constrained = if with_constrained {
        Some(ConstrainedConv2d::new(in_channels, 3, rng))
    } else {
        None
    };
    let c_in = if with_constrained { 3 } else { in_channels };
    let net = match arch {
        ClassifierArch::Small => build_small(c_in, num_classes, width, rng),
        ClassifierArch::Resnet18 => build_resnet18(c_in, num_classes, width, rng),
        ClassifierArch::Resnet50 => build_resnet50(c_in, num_classes, width, rng),
        ClassifierArch::Densenet100 => build_densenet100(c_in, num_classes, width, rng),
        ClassifierArch::Vgg16 => build_vgg16(c_in, num_classes, width, rng),
    };
    TargetClassifier { constrained, net, arch, num_classes }
}

fn build_small(c_in: usize, k: usize, w: usize, rng: &mut ChaCha8Rng) -> Stack {
    Stack::new()
        .with("conv1", Conv2d::new(c_in, w, 3, 1, 1, rng))
        .with("bn1", BatchNorm2d::new(w))
        .with("relu1", ReLU::new())
        .with("conv2", Conv2d::new(w, 2 * w, 3, 2, 1, rng))
        .with("bn2", BatchNorm2d::new(2 * w))
        .with("relu2", ReLU::new())
        .with("conv3", Conv2d::new(2 * w, 4 * w, 3, 2, 1, rng))
        .with("bn3", BatchNorm2d::new(4 * w))
        .with("relu3", ReLU::new())
        .with("gap", GlobalAvgPool::new())
        .with("fc", Linear::new(4 * w, k, rng))
}

fn build_resnet18(c_in: usize, k: usize, w: usize, rng: &mut ChaCha8Rng) -> Stack {
    let mut net = Stack::new()
        .with("conv1", Conv2d::new(c_in, w, 3, 1, 1, rng))
        .with("bn1", BatchNorm2d::new(w))
        .with("relu1", ReLU::new());
    let plan: [(usize, usize, usize); 4] = [(w, w, 1), (w, 2 * w, 2), (2 * w, 4 * w, 2), (4 * w, 8 * w, 2)];
    for (stage, &(cin, cout, stride)) in plan.iter().enumerate() {
        net.push(format!("layer{}a", stage + 1), BasicBlock::new(cin, cout, stride, rng));
        net.push(format!("layer{}b", stage + 1), BasicBlock::new(cout, cout, 1, rng));
    }
    net.push("gap", GlobalAvgPool::new());
    net.push("fc", Linear::new(8 * w, k, rng));
    net
}

fn build_resnet50(c_in: usize, k: usize, w: usize, rng: &mut ChaCha8Rng) -> Stack {
    let mut net = Stack::new()
        .with("conv1", Conv2d::new(c_in, w, 3, 1, 1, rng))
        .with("bn1", BatchNorm2d::new(w))
        .with("relu1", ReLU::new());
    let plan: [(usize, usize, usize); 4] = [(3, w, 1), (4, 2 * w, 2), (6, 4 * w, 2), (3, 8 * w, 2)];
    let mut cin = w;
    for (stage, &(blocks, mid, stride)) in plan.iter().enumerate() {
        for b in 0..blocks {
            let s = if b == 0 { stride } else { 1 };
            net.push(
                format!("layer{}_{b}", stage + 1),
                Bottleneck::new(cin, mid, s, rng),
            );
            cin = mid * Bottleneck::EXPANSION;
        }
    }
    net.push("gap", GlobalAvgPool::new());
    net.push("fc", Linear::new(cin, k, rng));
    net
}

fn build_densenet100(c_in: usize, k: usize, growth: usize, rng: &mut ChaCha8Rng) -> Stack {
    // Bottleneck-compressed layout: three 16-layer dense blocks with
    // half-compression transitions (100 weighted layers at full scale).
    let mut ch = 2 * growth;
    let mut net = Stack::new().with("conv1", Conv2d::new(c_in, ch, 3, 1, 1, rng));
    for stage in 0..3 {
        let block = DenseBlock::new(ch, growth, 16, rng);
        ch = block.out_channels();
        net.push(format!("dense{}", stage + 1), block);
        if stage < 2 {
            let out = ch / 2;
            net.push(format!("trans{}", stage + 1), transition(ch, out, rng));
            ch = out;
        }
    }
    net.push("bn_final", BatchNorm2d::new(ch));
    net.push("relu_final", ReLU::new());
    net.push("gap", GlobalAvgPool::new());
    net.push("fc", Linear::new(ch, k, rng));
    net
}

fn build_vgg16(c_in: usize, k: usize, w: usize, rng: &mut ChaCha8Rng) -> Stack {
    let cfg: [&[usize]; 5] = [
        &[w, w],
        &[2 * w, 2 * w],
        &[4 * w, 4 * w, 4 * w],
        &[8 * w, 8 * w, 8 * w],
        &[8 * w, 8 * w, 8 * w],
    ];
    let mut net = Stack::new();
    let mut cin = c_in;
    for (stage, convs) in cfg.iter().enumerate() {
        for (i, &cout) in convs.iter().enumerate() {
            net.push(format!("conv{}_{}", stage + 1, i + 1), Conv2d::new(cin, cout, 3, 1, 1, rng));
            net.push(format!("bn{}_{}", stage + 1, i + 1), BatchNorm2d::new(cout));
            net.push(format!("relu{}_{}", stage + 1, i + 1), ReLU::new());
            cin = cout;
        }
        net.push(format!("pool{}", stage + 1), MaxPool2d::new(2));
    }
    net.push("gap", GlobalAvgPool::new());
    net.push("fc", Linear::new(cin, k, rng));
    net
}

/// Two-branch evaluator: a learned decomposition network splits the input
/// into a high-frequency residual and its low-frequency complement, and one
/// classifier scores each branch. As a [`Layer`] the forward pass returns
/// the channel concatenation of both logit vectors, `(N, 2K, 1, 1)`.
pub struct DualStreamEvaluator {
    pub e0: Stack,
    pub high: TargetClassifier,
    pub low: TargetClassifier,
    pub num_classes: usize,
}

impl DualStreamEvaluator {
    pub fn new(
        num_classes: usize,
        trunk_width: usize,
        stream_arch: ClassifierArch,
        stream_width: usize,
        rng: &mut ChaCha8Rng,
    ) -> DualStreamEvaluator {
        let e0 = build_residual_trunk(3, trunk_width, 2, false, rng);
        let high = build_target_classifier(stream_arch, num_classes, 3, stream_width, false, rng);
        let low = build_target_classifier(stream_arch, num_classes, 3, stream_width, false, rng);
        DualStreamEvaluator { e0, high, low, num_classes }
    }

    /// Splits `x` into (high-frequency residual, low-frequency complement).
    /// The complement is exact by construction: `x_l = x − x_h`.
    pub fn decompose(&mut self, x: &Array4<f64>, mode: Mode) -> (Array4<f64>, Array4<f64>) {
        let xh = self.e0.forward(x, mode);
        let xl = x - &xh;
        (xh, xl)
    }

    /// Per-stream logits for a pre-decomposed input.
    pub fn stream_logits(
        &mut self,
        xh: &Array4<f64>,
        xl: &Array4<f64>,
        mode: Mode,
    ) -> (Array4<f64>, Array4<f64>) {
        (self.high.forward(xh, mode), self.low.forward(xl, mode))
    }

    /// Mean of the two streams' softmax outputs, `(N, K, 1, 1)`.
    pub fn predict_probs(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let (xh, xl) = self.decompose(x, mode);
        let (lh, ll) = self.stream_logits(&xh, &xl, mode);
        (softmax(&lh) + softmax(&ll)).mapv(|v| 0.5 * v)
    }

    /// Splits a concatenated logit gradient into per-stream parts.
    pub fn split_logit_grad(&self, g: &Array4<f64>) -> (Array4<f64>, Array4<f64>) {
        let k = self.num_classes;
        assert_eq!(g.dim().1, 2 * k);
        (
            g.slice(s![.., 0..k, .., ..]).as_standard_layout().to_owned(),
            g.slice(s![.., k.., .., ..]).as_standard_layout().to_owned(),
        )
    }
}

impl Layer for DualStreamEvaluator {
    fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let (xh, xl) = self.decompose(x, mode);
        let (lh, ll) = self.stream_logits(&xh, &xl, mode);
        concat_channels(&lh, &ll)
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let (gh, gl) = self.split_logit_grad(grad_out);
        let g_high_in = self.high.backward(&gh);
        let g_low_in = self.low.backward(&gl);
        // x_h = e0(x), x_l = x − x_h ⇒ dx = e0ᵀ(g_H − g_L) + g_L.
        self.e0.backward(&(&g_high_in - &g_low_in)) + &g_low_in
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.e0.visit_params(&mut |n, p| f(&format!("e0.{n}"), p));
        self.high.visit_params(&mut |n, p| f(&format!("high.{n}"), p));
        self.low.visit_params(&mut |n, p| f(&format!("low.{n}"), p));
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.e0.visit_buffers(&mut |n, b| f(&format!("e0.{n}"), b));
        self.high.visit_buffers(&mut |n, b| f(&format!("high.{n}"), b));
        self.low.visit_buffers(&mut |n, b| f(&format!("low.{n}"), b));
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.e0.set_frozen(frozen);
        self.high.set_frozen(frozen);
        self.low.set_frozen(frozen);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::module::LayerExt;
    use rand::{Rng, SeedableRng};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(21)
    }

    fn randn(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn(shape, |_| r.gen::<f64>())
    }

    #[test]
    fn generator_output_shape_and_range() {
        let mut g = Generator::new(6, 8, &mut rng());
        let x = randn((2, 3, 32, 32), 1);
        let cond = condition_planes(&[1, 4], 6, 32, 32);
        let y = g.forward_cond(&x, &cond, Mode::Train);
        assert_eq!(y.dim(), (2, 3, 32, 32));
        assert!(y.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn generator_parameter_count_closed_form() {
        // width 8, 6 condition planes, counted layer by layer.
        let w = 8usize;
        let cin = 3 + 6;
        let conv1 = 7 * 7 * cin * w + w;
        let in1 = 2 * w;
        let conv2 = 3 * 3 * w * (2 * w) + 2 * w;
        let in2 = 2 * (2 * w);
        let conv3 = 3 * 3 * (2 * w) * (4 * w) + 4 * w;
        let in3 = 2 * (4 * w);
        let res_conv = 3 * 3 * (4 * w) * (4 * w) + 4 * w;
        let res_block = 2 * res_conv + 2 * (2 * (4 * w));
        let deconv1 = 3 * 3 * (4 * w) * (2 * w) + 2 * w;
        let in4 = 2 * (2 * w);
        let deconv2 = 3 * 3 * (2 * w) * w + w;
        let in5 = 2 * w;
        let conv_out = 7 * 7 * w * 3 + 3;
        let expected = conv1
            + in1
            + conv2
            + in2
            + conv3
            + in3
            + 2 * res_block
            + deconv1
            + in4
            + deconv2
            + in5
            + conv_out;
        let mut g = Generator::new(6, 8, &mut rng());
        assert_eq!(g.param_count(), expected);
        assert_eq!(expected, 53_715);
    }

    #[test]
    fn discriminator_score_map_sizes() {
        let mut d = Discriminator::new(6, 8, &mut rng());
        let x64 = randn((1, 3, 64, 64), 2);
        let cond = condition_planes(&[3], 6, 64, 64);
        assert_eq!(d.forward_cond(&x64, &cond, Mode::Train).dim(), (1, 1, 10, 10));
        let x32 = randn((1, 3, 32, 32), 3);
        let cond = condition_planes(&[0], 6, 32, 32);
        assert_eq!(d.forward_cond(&x32, &cond, Mode::Train).dim(), (1, 1, 2, 2));
    }

    #[test]
    fn discriminator_constraint_holds_at_init_and_after_project() {
        let mut d = Discriminator::new(2, 4, &mut rng());
        assert!(d.constraint_satisfied(1e-12));
        d.constrained
            .visit_params(&mut |_, p| p.value.mapv_inplace(|v| v + 0.3));
        assert!(!d.constraint_satisfied(1e-6));
        d.project_constraints();
        assert!(d.constraint_satisfied(1e-12));
    }

    #[test]
    fn discriminator_responds_to_condition() {
        let mut d = Discriminator::new(4, 4, &mut rng());
        let x = randn((1, 3, 32, 32), 4);
        let c1 = condition_planes(&[0], 4, 32, 32);
        let c2 = condition_planes(&[3], 4, 32, 32);
        let s1 = d.forward_cond(&x, &c1, Mode::Train);
        let s2 = d.forward_cond(&x, &c2, Mode::Train);
        let diff: f64 = s1.iter().zip(s2.iter()).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 1e-6, "condition planes must influence the score");
    }

    #[test]
    fn evaluator_decomposition_is_exact() {
        let mut e = DualStreamEvaluator::new(4, 4, ClassifierArch::Small, 4, &mut rng());
        let x = randn((1, 3, 16, 16), 5);
        let (xh, xl) = e.decompose(&x, Mode::Eval);
        // x_l is literally x − x_h, so recombination holds to rounding
        // error of the largest intermediate.
        for ((a, b), c) in xh.iter().zip(xl.iter()).zip(x.iter()) {
            let scale = a.abs().max(b.abs()).max(c.abs()).max(1.0);
            assert!((a + b - c).abs() <= 2.0 * scale * f64::EPSILON, "{a} + {b} vs {c}");
        }
    }

    #[test]
    fn evaluator_forward_concats_both_streams() {
        let mut e = DualStreamEvaluator::new(5, 4, ClassifierArch::Small, 4, &mut rng());
        let x = randn((2, 3, 16, 16), 6);
        let y = e.forward(&x, Mode::Train);
        assert_eq!(y.dim(), (2, 10, 1, 1));
        let p = e.predict_probs(&x, Mode::Eval);
        assert_eq!(p.dim(), (2, 5, 1, 1));
        for nn in 0..2 {
            let total: f64 = (0..5).map(|k| p[(nn, k, 0, 0)]).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluator_input_gradient_matches_finite_difference() {
        let mut e = DualStreamEvaluator::new(3, 2, ClassifierArch::Small, 2, &mut rng());
        let x = randn((1, 3, 8, 8), 7);
        let y = e.forward(&x, Mode::Train);
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let wgt = Array4::from_shape_fn(y.raw_dim(), |_| r.gen::<f64>() - 0.5);
        let _ = e.forward(&x, Mode::Train);
        let dx = e.backward(&wgt);
        let h = 1e-5;
        for idx in [(0, 0, 2, 3), (0, 2, 7, 1), (0, 1, 4, 4)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let fp = (&e.forward(&xp, Mode::Train) * &wgt).sum();
            let fm = (&e.forward(&xm, Mode::Train) * &wgt).sum();
            let num = (fp - fm) / (2.0 * h);
            assert!(
                (num - dx[idx]).abs() < 1e-4 * (1.0 + num.abs()),
                "{idx:?}: {num} vs {}",
                dx[idx]
            );
        }
    }

    #[test]
    fn classifier_zoo_builds_and_classifies() {
        for arch in ClassifierArch::ALL {
            let mut clf = build_target_classifier(arch, 6, 3, 2, false, &mut rng());
            let x = randn((2, 3, 32, 32), 9);
            let y = clf.forward(&x, Mode::Train);
            assert_eq!(y.dim(), (2, 6, 1, 1), "{arch}");
            assert!(clf.param_count() > 0);
        }
    }

    #[test]
    fn constrained_classifier_variant() {
        let mut clf = build_target_classifier(ClassifierArch::Small, 4, 3, 4, true, &mut rng());
        assert!(clf.constraint_satisfied(1e-12));
        let x = randn((1, 3, 32, 32), 10);
        let y = clf.forward(&x, Mode::Train);
        assert_eq!(y.dim(), (1, 4, 1, 1));
        // Perturb and re-project.
        clf.constrained
            .as_mut()
            .unwrap()
            .visit_params(&mut |_, p| p.value.mapv_inplace(|v| v * 1.5));
        assert!(!clf.constraint_satisfied(1e-9));
        clf.project_constraints();
        assert!(clf.constraint_satisfied(1e-12));
    }

    #[test]
    fn rgb_fd_input_channels_flow_through() {
        let mut clf = build_target_classifier(ClassifierArch::Small, 3, 6, 4, false, &mut rng());
        let x = randn((1, 6, 16, 16), 11);
        assert_eq!(clf.forward(&x, Mode::Train).dim(), (1, 3, 1, 1));
    }

    #[test]
    fn arch_names_round_trip() {
        for arch in ClassifierArch::ALL {
            assert_eq!(arch.name().parse::<ClassifierArch>().unwrap(), arch);
        }
        assert!("mlp".parse::<ClassifierArch>().is_err());
    }

    #[test]
    fn condition_planes_are_one_hot() {
        let c = condition_planes(&[2, 0], 4, 8, 8);
        assert_eq!(c.dim(), (2, 4, 8, 8));
        assert_eq!(c.slice(s![0, 2, .., ..]).sum(), 64.0);
        assert_eq!(c.slice(s![0, 0, .., ..]).sum(), 0.0);
        assert_eq!(c.slice(s![1, 0, .., ..]).sum(), 64.0);
        assert_eq!(c.sum(), 128.0);
    }
}
