//! White-box attacks on anonymized images: FGSM, PGD, and DDN, driven by a
//! differentiable stand-in for the forensic classifier under test.
//!
//! Attacks are *targeted*: they push an image toward being classified as a
//! chosen camera model, i.e. they minimize the proxy's negative log-likelihood
//! of the target class. Budgets (`epsilon`, `alpha`) are expressed in 8-bit
//! intensity units — an `epsilon` of 4.53 bounds each pixel by 4.53/255.

use ndarray::{Array4, Axis, s};

use cama_core::PreprocessorKind;
use cama_core::image::quantize_u8;
use cama_core::preprocess::fd::FD_TAPS;
use cama_core::preprocess::hp::HP_KERNEL;
use cama_nn::losses::{argmax_rows, classification_loss, cross_entropy};
use cama_nn::module::{Layer, Mode};
use cama_nn::nets::{DualStreamEvaluator, TargetClassifier, concat_channels};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Default L∞ budget in 8-bit intensity units.
pub const EPSILON_DEFAULT: f64 = 4.53;
/// Default PGD step size in 8-bit intensity units.
pub const PGD_ALPHA_DEFAULT: f64 = 1.0;
/// Default PGD iteration count.
pub const PGD_STEPS_DEFAULT: usize = 40;
/// Default DDN iteration count.
pub const DDN_STEPS_DEFAULT: usize = 100;
/// Default DDN norm-adjustment factor.
pub const DDN_GAMMA_DEFAULT: f64 = 0.05;

/// The attack family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Fgsm,
    Pgd,
    Ddn,
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Pgd => "pgd",
            AttackKind::Ddn => "ddn",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for AttackKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fgsm" => Ok(AttackKind::Fgsm),
            "pgd" => Ok(AttackKind::Pgd),
            "ddn" => Ok(AttackKind::Ddn),
            other => Err(BenchError::Config(format!(
                "unknown attack '{other}' (expected fgsm|pgd|ddn)"
            ))),
        }
    }
}

/// Attack budget. `epsilon` and `alpha` are in 8-bit units; `gamma` is the
/// DDN per-step norm adjustment. Fields a given kind does not use are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub epsilon: f64,
    pub alpha: f64,
    pub steps: usize,
    pub gamma: f64,
}

impl AttackConfig {
    /// Single-step sign attack at the default budget.
    pub fn fgsm() -> AttackConfig {
        AttackConfig {
            kind: AttackKind::Fgsm,
            epsilon: EPSILON_DEFAULT,
            alpha: EPSILON_DEFAULT,
            steps: 1,
            gamma: DDN_GAMMA_DEFAULT,
        }
    }

    /// Iterated sign attack projected onto the L∞ ball (default budget).
    pub fn pgd() -> AttackConfig {
        AttackConfig {
            kind: AttackKind::Pgd,
            epsilon: EPSILON_DEFAULT,
            alpha: PGD_ALPHA_DEFAULT,
            steps: PGD_STEPS_DEFAULT,
            gamma: DDN_GAMMA_DEFAULT,
        }
    }

    /// Decoupled direction-and-norm attack (default budget). `epsilon` is
    /// unused: DDN searches for the smallest sufficient L2 distortion.
    pub fn ddn() -> AttackConfig {
        AttackConfig {
            kind: AttackKind::Ddn,
            epsilon: EPSILON_DEFAULT,
            alpha: PGD_ALPHA_DEFAULT,
            steps: DDN_STEPS_DEFAULT,
            gamma: DDN_GAMMA_DEFAULT,
        }
    }

    /// The default budget for `kind`.
    pub fn for_kind(kind: AttackKind) -> AttackConfig {
        match kind {
            AttackKind::Fgsm => AttackConfig::fgsm(),
            AttackKind::Pgd => AttackConfig::pgd(),
            AttackKind::Ddn => AttackConfig::ddn(),
        }
    }

    /// Checks the fields the chosen kind actually uses.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BenchError::Config(msg));
        if !(self.epsilon.is_finite() && self.alpha.is_finite() && self.gamma.is_finite()) {
            return bad(format!("non-finite attack budget: {self:?}"));
        }
        match self.kind {
            AttackKind::Fgsm => {
                if self.epsilon < 0.0 {
                    return bad(format!("fgsm epsilon must be >= 0, got {}", self.epsilon));
                }
            }
            AttackKind::Pgd => {
                if self.epsilon < 0.0 {
                    return bad(format!("pgd epsilon must be >= 0, got {}", self.epsilon));
                }
                if self.alpha <= 0.0 {
                    return bad(format!("pgd alpha must be > 0, got {}", self.alpha));
                }
                if self.steps == 0 {
                    return bad("pgd needs at least one step".into());
                }
            }
            AttackKind::Ddn => {
                if self.alpha <= 0.0 {
                    return bad(format!("ddn alpha must be > 0, got {}", self.alpha));
                }
                if self.steps == 0 {
                    return bad("ddn needs at least one step".into());
                }
                if !(self.gamma > 0.0 && self.gamma < 1.0) {
                    return bad(format!("ddn gamma must lie in (0, 1), got {}", self.gamma));
                }
            }
        }
        Ok(())
    }
}

/// A differentiable classifier the attacks can query.
///
/// `targets` and the values `predict` returns are class *ranks* — indices
/// into the classifier's class list — not raw labels.
pub trait AttackProxy {
    /// Scalar objective (mean negative log-likelihood of each sample's target
    /// class) and its gradient with respect to the input batch. Lowering it
    /// makes the batch look more like the targets.
    fn nll_grad(&mut self, x: &Array4<f64>, targets: &[usize]) -> Result<(f64, Array4<f64>)>;

    /// Predicted class rank per sample; ties resolve to the lowest index.
    fn predict(&mut self, x: &Array4<f64>) -> Result<Vec<usize>>;

    fn num_classes(&self) -> usize;
}

/// Proxy built on the dual-stream evaluator: the objective is the same
/// two-stream classification loss the anonymizer trains against.
pub struct EvaluatorProxy {
    pub eval: DualStreamEvaluator,
}

impl EvaluatorProxy {
    pub fn new(mut eval: DualStreamEvaluator) -> EvaluatorProxy {
        // Attacks differentiate inputs, never weights.
        eval.set_frozen(true);
        EvaluatorProxy { eval }
    }
}

impl AttackProxy for EvaluatorProxy {
    fn nll_grad(&mut self, x: &Array4<f64>, targets: &[usize]) -> Result<(f64, Array4<f64>)> {
        let (xh, xl) = self.eval.decompose(x, Mode::Eval);
        let (lh, ll) = self.eval.stream_logits(&xh, &xl, Mode::Eval);
        let (loss, gh, gl) = classification_loss(&lh, &ll, targets);
        let gx = self.eval.backward(&concat_channels(&gh, &gl));
        Ok((loss, gx))
    }

    fn predict(&mut self, x: &Array4<f64>) -> Result<Vec<usize>> {
        let probs = self.eval.predict_probs(x, Mode::Eval);
        Ok(argmax_rows(&probs))
    }

    fn num_classes(&self) -> usize {
        self.eval.num_classes
    }
}

/// Proxy built on a target classifier behind an analytic preprocessor.
///
/// The wavelet-Wiener residual has no usable gradient (its shrinkage is
/// data-dependent and non-smooth), so `Ww` is rejected at construction;
/// attack that stack through a differentiable stand-in instead.
pub struct ClassifierProxy {
    pub clf: TargetClassifier,
    pub preproc: PreprocessorKind,
}

impl ClassifierProxy {
    pub fn new(mut clf: TargetClassifier, preproc: PreprocessorKind) -> Result<ClassifierProxy> {
        if preproc == PreprocessorKind::Ww {
            return Err(BenchError::NonDifferentiable(preproc));
        }
        clf.set_frozen(true);
        Ok(ClassifierProxy { clf, preproc })
    }

    fn preproc_forward(&self, x: &Array4<f64>) -> Array4<f64> {
        match self.preproc {
            PreprocessorKind::Rgb | PreprocessorKind::Cc => x.clone(),
            PreprocessorKind::Fd => fd_forward_chw(x),
            PreprocessorKind::Hp => hp_forward_chw(x),
            PreprocessorKind::RgbFd => {
                let fd = fd_forward_chw(x);
                concat_channels(x, &fd)
            }
            PreprocessorKind::Ww => unreachable!("rejected at construction"),
        }
    }

    fn preproc_adjoint(&self, g: &Array4<f64>) -> Array4<f64> {
        match self.preproc {
            PreprocessorKind::Rgb | PreprocessorKind::Cc => g.clone(),
            PreprocessorKind::Fd => fd_adjoint_chw(g),
            PreprocessorKind::Hp => hp_adjoint_chw(g),
            PreprocessorKind::RgbFd => {
                let c = g.dim().1 / 2;
                let g_rgb = g.slice(s![.., 0..c, .., ..]).to_owned();
                let g_fd = g.slice(s![.., c.., .., ..]).as_standard_layout().to_owned();
                g_rgb + fd_adjoint_chw(&g_fd)
            }
            PreprocessorKind::Ww => unreachable!("rejected at construction"),
        }
    }
}

impl AttackProxy for ClassifierProxy {
    fn nll_grad(&mut self, x: &Array4<f64>, targets: &[usize]) -> Result<(f64, Array4<f64>)> {
        let h = self.preproc_forward(x);
        let logits = self.clf.forward(&h, Mode::Eval);
        let (loss, g_logits) = cross_entropy(&logits, targets);
        let gh = self.clf.backward(&g_logits);
        Ok((loss, self.preproc_adjoint(&gh)))
    }

    fn predict(&mut self, x: &Array4<f64>) -> Result<Vec<usize>> {
        let h = self.preproc_forward(x);
        let logits = self.clf.forward(&h, Mode::Eval);
        Ok(argmax_rows(&logits))
    }

    fn num_classes(&self) -> usize {
        self.clf.num_classes
    }
}

/// Third-difference residual on a CHW batch; matches the image-side residual
/// with replicate padding, `0.5 * (d_h + d_v)`.
fn fd_forward_chw(x: &Array4<f64>) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    let cl = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = Array4::<f64>::zeros((n, c, h, w));
    for nn in 0..n {
        for cc in 0..c {
            for i in 0..h as isize {
                for j in 0..w as isize {
                    let mut acc = 0.0;
                    for &(off, k) in FD_TAPS.iter() {
                        acc += k * x[(nn, cc, i as usize, cl(j + off, w))];
                        acc += k * x[(nn, cc, cl(i + off, h), j as usize)];
                    }
                    out[(nn, cc, i as usize, j as usize)] = 0.5 * acc;
                }
            }
        }
    }
    out
}

/// Adjoint of [`fd_forward_chw`]: scatters each output gradient back through
/// the same clamped reads.
fn fd_adjoint_chw(g: &Array4<f64>) -> Array4<f64> {
    let (n, c, h, w) = g.dim();
    let cl = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = Array4::<f64>::zeros((n, c, h, w));
    for nn in 0..n {
        for cc in 0..c {
            for i in 0..h as isize {
                for j in 0..w as isize {
                    let go = 0.5 * g[(nn, cc, i as usize, j as usize)];
                    for &(off, k) in FD_TAPS.iter() {
                        out[(nn, cc, i as usize, cl(j + off, w))] += k * go;
                        out[(nn, cc, cl(i + off, h), j as usize)] += k * go;
                    }
                }
            }
        }
    }
    out
}

/// High-pass residual on a CHW batch; matches the image-side 5×5 kernel with
/// replicate padding.
fn hp_forward_chw(x: &Array4<f64>) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    let cl = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = Array4::<f64>::zeros((n, c, h, w));
    for nn in 0..n {
        for cc in 0..c {
            for i in 0..h as isize {
                for j in 0..w as isize {
                    let mut acc = 0.0;
                    for (di, row) in HP_KERNEL.iter().enumerate() {
                        for (dj, &k) in row.iter().enumerate() {
                            acc += k
                                * x[(nn, cc, cl(i + di as isize - 2, h), cl(j + dj as isize - 2, w))];
                        }
                    }
                    out[(nn, cc, i as usize, j as usize)] = acc;
                }
            }
        }
    }
    out
}

/// Adjoint of [`hp_forward_chw`].
fn hp_adjoint_chw(g: &Array4<f64>) -> Array4<f64> {
    let (n, c, h, w) = g.dim();
    let cl = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = Array4::<f64>::zeros((n, c, h, w));
    for nn in 0..n {
        for cc in 0..c {
            for i in 0..h as isize {
                for j in 0..w as isize {
                    let go = g[(nn, cc, i as usize, j as usize)];
                    for (di, row) in HP_KERNEL.iter().enumerate() {
                        for (dj, &k) in row.iter().enumerate() {
                            out[(nn, cc, cl(i + di as isize - 2, h), cl(j + dj as isize - 2, w))] +=
                                k * go;
                        }
                    }
                }
            }
        }
    }
    out
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_batch(x: &Array4<f64>, targets: &[usize], k: usize) -> Result<()> {
    if targets.len() != x.dim().0 {
        return Err(BenchError::Config(format!(
            "batch of {} images but {} targets",
            x.dim().0,
            targets.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= k) {
        return Err(BenchError::Config(format!(
            "target rank {t} out of range for {k} classes"
        )));
    }
    Ok(())
}

fn check_finite(g: &Array4<f64>) -> Result<()> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(BenchError::Config(
            "attack gradient is non-finite; the proxy has diverged".into(),
        ));
    }
    Ok(())
}

/// One signed gradient step of size `epsilon` (8-bit units), clipped to
/// [0, 1]. With `epsilon == 0` the input comes back unchanged.
pub fn attack_fgsm(
    proxy: &mut dyn AttackProxy,
    x: &Array4<f64>,
    targets: &[usize],
    epsilon: f64,
) -> Result<Array4<f64>> {
    check_batch(x, targets, proxy.num_classes())?;
    let e = epsilon / 255.0;
    let (_, g) = proxy.nll_grad(x, targets)?;
    check_finite(&g)?;
    let mut out = x.clone();
    out.zip_mut_with(&g, |v, &gv| *v = (*v - e * sign(gv)).clamp(0.0, 1.0));
    Ok(out)
}

/// Iterated signed gradient descent, each iterate clamped to the L∞ ball of
/// radius `epsilon` around `x` and to [0, 1]. With `steps == 1` and
/// `alpha == epsilon` this reduces exactly to FGSM.
pub fn attack_pgd(
    proxy: &mut dyn AttackProxy,
    x: &Array4<f64>,
    targets: &[usize],
    epsilon: f64,
    alpha: f64,
    steps: usize,
) -> Result<Array4<f64>> {
    check_batch(x, targets, proxy.num_classes())?;
    let e = epsilon / 255.0;
    let a = alpha / 255.0;
    let mut cur = x.clone();
    for _ in 0..steps {
        let (_, g) = proxy.nll_grad(&cur, targets)?;
        check_finite(&g)?;
        ndarray::Zip::from(&mut cur).and(x).and(&g).for_each(|v, &xv, &gv| {
            let stepped = *v - a * sign(gv);
            *v = stepped.max(xv - e).min(xv + e).clamp(0.0, 1.0);
        });
    }
    Ok(cur)
}

/// The L2 radius the decoupled-norm schedule assigns for the next iterate:
/// shrink the current distortion by `gamma` while the iterate already fools
/// the proxy, grow it otherwise.
pub fn ddn_radius(adversarial: bool, gamma: f64, dist: f64) -> f64 {
    if adversarial { (1.0 - gamma) * dist } else { (1.0 + gamma) * dist }
}

/// Decoupled direction-and-norm descent: a normalized L2 gradient step of
/// size `alpha` (8-bit units), then a multiplicative norm adjustment by
/// `gamma` toward the decision boundary.
///
/// Success is judged on the *quantized* iterate — the only form a scorer
/// ever sees — and the lowest-norm quantized success is returned per sample.
/// Samples that never succeed come back as the final (un-snapped) iterate.
pub fn attack_ddn(
    proxy: &mut dyn AttackProxy,
    x: &Array4<f64>,
    targets: &[usize],
    alpha: f64,
    steps: usize,
    gamma: f64,
) -> Result<Array4<f64>> {
    check_batch(x, targets, proxy.num_classes())?;
    let a = alpha / 255.0;
    let n = x.dim().0;
    let mut cur = x.clone();
    let mut best_norm: Vec<Option<f64>> = vec![None; n];
    let mut best = x.clone();
    for _ in 0..steps {
        let (_, g) = proxy.nll_grad(&cur, targets)?;
        check_finite(&g)?;
        for i in 0..n {
            let gi = g.index_axis(Axis(0), i);
            let gn = gi.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn > 0.0 {
                let step = a / gn;
                cur.index_axis_mut(Axis(0), i)
                    .zip_mut_with(&gi, |v, &gv| *v = (*v - step * gv).clamp(0.0, 1.0));
            }
        }
        let q = cur.mapv(|v| quantize_u8(v) as f64 / 255.0);
        let preds = proxy.predict(&q)?;
        for i in 0..n {
            let adv = preds[i] == targets[i];
            if adv {
                let qn = q
                    .index_axis(Axis(0), i)
                    .iter()
                    .zip(x.index_axis(Axis(0), i).iter())
                    .map(|(qv, xv)| (qv - xv) * (qv - xv))
                    .sum::<f64>()
                    .sqrt();
                if best_norm[i].is_none_or(|b| qn < b) {
                    best_norm[i] = Some(qn);
                    best.index_axis_mut(Axis(0), i).assign(&q.index_axis(Axis(0), i));
                }
            }
            // Rescaling the residual by the radius factor moves ‖x′ − x‖₂
            // exactly onto the scheduled radius; a zero residual stays zero.
            let scale = ddn_radius(adv, gamma, 1.0);
            let xi = x.index_axis(Axis(0), i);
            cur.index_axis_mut(Axis(0), i)
                .zip_mut_with(&xi, |v, &xv| *v = (xv + scale * (*v - xv)).clamp(0.0, 1.0));
        }
    }
    for i in 0..n {
        if best_norm[i].is_none() {
            best.index_axis_mut(Axis(0), i).assign(&cur.index_axis(Axis(0), i));
        }
    }
    Ok(best)
}

/// Dispatches to the configured attack after validating the budget.
pub fn run_attack(
    proxy: &mut dyn AttackProxy,
    x: &Array4<f64>,
    targets: &[usize],
    cfg: &AttackConfig,
) -> Result<Array4<f64>> {
    cfg.validate()?;
    match cfg.kind {
        AttackKind::Fgsm => attack_fgsm(proxy, x, targets, cfg.epsilon),
        AttackKind::Pgd => attack_pgd(proxy, x, targets, cfg.epsilon, cfg.alpha, cfg.steps),
        AttackKind::Ddn => attack_ddn(proxy, x, targets, cfg.alpha, cfg.steps, cfg.gamma),
    }
}
