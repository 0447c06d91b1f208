//! Training for the target classifiers the anonymizer is scored against.

use cama_core::{PatchStore, epoch_order};
use cama_nn::losses::{accuracy, cross_entropy};
use cama_nn::module::{Layer, LayerExt, Mode};
use cama_nn::nets::TargetClassifier;
use cama_nn::optim::{Sgd, has_non_finite};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::TargetConfig;
use crate::data::{ClassIndex, preprocessed_batch};
use crate::error::{Result, TrainError};

#[derive(Debug, Clone)]
pub struct TargetReport {
    pub epochs_run: usize,
    pub train_accuracy: f64,
}

/// Accuracy of `clf` over `store` in eval mode, applying the classifier's
/// preprocessor but no augmentation.
pub fn classifier_accuracy(
    clf: &mut TargetClassifier,
    store: &PatchStore,
    index: &ClassIndex,
    cfg: &TargetConfig,
) -> Result<f64> {
    let n = store.patches.len();
    let idxs: Vec<usize> = (0..n).collect();
    let mut hits = 0usize;
    for chunk in idxs.chunks(cfg.batch_size) {
        let (x, y) = preprocessed_batch(store, chunk, None, cfg.preprocessor, index)?;
        let logits = clf.forward(&x, Mode::Eval);
        hits += (accuracy(&logits, &y) * y.len() as f64).round() as usize;
    }
    Ok(hits as f64 / n as f64)
}

/// Trains a target classifier on `store` with dihedral augmentation drawn
/// per sample per epoch. The residual-constraint layer, when present, is
/// re-projected after every optimizer step.
pub fn train_target(
    clf: &mut TargetClassifier,
    store: &PatchStore,
    cfg: &TargetConfig,
) -> Result<TargetReport> {
    if store.patches.is_empty() {
        return Err(TrainError::Config("empty patch store".into()));
    }
    let index = ClassIndex::new(&store.classes);
    let mut opt = Sgd::new(cfg.lr, cfg.momentum, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a67);

    let n = store.patches.len();
    let mut steps = 0u64;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(n, cfg.seed, epoch);
        for chunk in order.chunks(cfg.batch_size) {
            let augments: Vec<u8> = chunk.iter().map(|_| rng.gen_range(0..8)).collect();
            let (x, y) =
                preprocessed_batch(store, chunk, Some(&augments), cfg.preprocessor, &index)?;
            let logits = clf.forward(&x, Mode::Train);
            let (_, grad) = cross_entropy(&logits, &y);
            clf.zero_grad();
            let _ = clf.backward(&grad);
            opt.step(clf);
            clf.project_constraints();
            steps += 1;
            if has_non_finite(clf) {
                return Err(TrainError::NonFinite { phase: "target", step: steps });
            }
        }
        log::info!("target epoch {}/{}", epoch + 1, cfg.epochs);
    }
    debug_assert!(clf.constraint_satisfied(1e-9));
    let train_accuracy = classifier_accuracy(clf, store, &index, cfg)?;
    Ok(TargetReport { epochs_run: cfg.epochs, train_accuracy })
}
