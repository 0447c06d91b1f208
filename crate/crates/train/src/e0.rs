//! Decomposition-network pretraining: regress each patch onto its
//! wavelet–Wiener denoising residual.

use cama_core::{PatchStore, epoch_order, ww_residual};
use cama_nn::module::{Layer, LayerExt, Mode, Stack};
use cama_nn::nets::build_residual_trunk;
use cama_nn::optim::{Adam, has_non_finite};
use ndarray::{Array3, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::E0Config;
use crate::data::{hwc_to_chw, patch_chw, stack_chw};
use crate::error::{Result, TrainError};

/// Mean squared error with gradient wrt predictions.
pub fn mse_loss(pred: &Array4<f64>, target: &Array4<f64>) -> (f64, Array4<f64>) {
    assert_eq!(pred.dim(), target.dim());
    let n = pred.len() as f64;
    let diff = pred - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = diff.mapv(|d| 2.0 * d / n);
    (loss, grad)
}

#[derive(Debug, Clone)]
pub struct E0Report {
    pub epochs_run: usize,
    pub steps: u64,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Builds a fresh decomposition trunk per `cfg` (linear output head:
/// residuals are signed).
pub fn build_e0(cfg: &E0Config) -> Stack {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    build_residual_trunk(3, cfg.trunk_width, 2, false, &mut rng)
}

/// Trains `e0` on `store`. Reference residuals are computed once up front.
pub fn train_e0(e0: &mut Stack, store: &PatchStore, cfg: &E0Config) -> Result<E0Report> {
    if store.patches.is_empty() {
        return Err(TrainError::Config("empty patch store".into()));
    }
    let mut targets: Vec<Array3<f64>> = Vec::with_capacity(store.patches.len());
    for patch in &store.patches {
        let img = patch.to_image()?;
        targets.push(hwc_to_chw(&ww_residual(&img, cfg.sigma0)?));
    }

    let mut opt = Adam::new(cfg.lr, 0.9, 0.999, cfg.weight_decay);
    let n = store.patches.len();
    let mut report = E0Report { epochs_run: 0, steps: 0, epoch_losses: Vec::new() };
    for epoch in 0..cfg.epochs {
        let order = epoch_order(n, cfg.seed, epoch);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let x = stack_chw(&chunk.iter().map(|&i| patch_chw(&store.patches[i])).collect::<Vec<_>>());
            let t = stack_chw(&chunk.iter().map(|&i| targets[i].clone()).collect::<Vec<_>>());
            let pred = e0.forward(&x, Mode::Train);
            let (loss, grad) = mse_loss(&pred, &t);
            e0.zero_grad();
            let _ = e0.backward(&grad);
            opt.step(e0);
            report.steps += 1;
            if !loss.is_finite() || has_non_finite(e0) {
                return Err(TrainError::NonFinite { phase: "e0", step: report.steps });
            }
            epoch_loss += loss;
            batches += 1;
        }
        report.epoch_losses.push(epoch_loss / batches as f64);
        report.epochs_run = epoch + 1;
        log::info!(
            "e0 epoch {}/{}: loss {:.6}",
            epoch + 1,
            cfg.epochs,
            report.epoch_losses.last().unwrap()
        );
    }
    Ok(report)
}

/// Patches with class-dependent texture (smooth versus checkerboard), used
/// as a fast stand-in dataset by tests across the training phases.
#[cfg(test)]
pub(crate) fn textured_store(per_class: usize, side: usize, seed: u64) -> PatchStore {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patches = Vec::new();
    for label in 1..=2u32 {
        for _ in 0..per_class {
            let base: f64 = 0.3 + 0.3 * rng.gen::<f64>();
            let pixels = Array3::from_shape_fn((side, side, 3), |(i, j, c)| {
                let texture = if label == 2 && (i + j) % 2 == 0 { 0.12 } else { 0.0 };
                (base + texture + 0.02 * rng.gen::<f64>() + 0.05 * c as f64).clamp(0.0, 1.0)
            });
            patches.push(cama_core::Patch { pixels, label: Some(label), augment_id: 0 });
        }
    }
    PatchStore::from_patches(patches, side).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use cama_nn::optim::param_hash;

    #[test]
    fn zero_epochs_leaves_params_untouched() {
        let cfg = E0Config { epochs: 0, trunk_width: 2, ..E0Config::desk() };
        let mut e0 = build_e0(&cfg);
        let before = param_hash(&mut e0);
        let store = textured_store(4, 32, 1);
        let report = train_e0(&mut e0, &store, &cfg).unwrap();
        assert_eq!(report.epochs_run, 0);
        assert_eq!(param_hash(&mut e0), before);
    }

    #[test]
    fn loss_decreases_on_toy_data() {
        let cfg = E0Config {
            epochs: 3,
            trunk_width: 2,
            batch_size: 8,
            ..E0Config::desk()
        };
        let mut e0 = build_e0(&cfg);
        let store = textured_store(8, 32, 2);
        let report = train_e0(&mut e0, &store, &cfg).unwrap();
        assert_eq!(report.epochs_run, 3);
        let first = report.epoch_losses.first().unwrap();
        let last = report.epoch_losses.last().unwrap();
        assert!(last < first, "expected improvement: {first} -> {last}");
    }

    #[test]
    fn divergence_aborts_with_nonfinite_error() {
        let cfg = E0Config {
            epochs: 50,
            trunk_width: 2,
            batch_size: 8,
            lr: 1e150, // deliberately absurd
            ..E0Config::desk()
        };
        let mut e0 = build_e0(&cfg);
        let store = textured_store(4, 32, 3);
        match train_e0(&mut e0, &store, &cfg) {
            Err(TrainError::NonFinite { phase: "e0", .. }) => {}
            other => panic!("expected NonFinite abort, got {other:?}"),
        }
    }
}
