//! Stream-classifier training over the frozen decomposition network.

use cama_core::{PatchStore, epoch_order};
use cama_nn::losses::{accuracy, cross_entropy, softmax};
use cama_nn::module::{Layer, LayerExt, Mode};
use cama_nn::nets::DualStreamEvaluator;
use cama_nn::optim::{Sgd, has_non_finite, param_hash};

use crate::config::StreamConfig;
use crate::data::{ClassIndex, store_batch};
use crate::error::{Result, TrainError};

#[derive(Debug, Clone)]
pub struct StreamReport {
    pub epochs_run: usize,
    pub acc_high: f64,
    pub acc_low: f64,
    pub acc_fused: f64,
}

/// Accuracy of each stream and of the fused (mean-probability) prediction
/// over `store`, in eval mode.
pub fn stream_accuracy(
    eval: &mut DualStreamEvaluator,
    store: &PatchStore,
    index: &ClassIndex,
    batch_size: usize,
) -> Result<(f64, f64, f64)> {
    let n = store.patches.len();
    let idxs: Vec<usize> = (0..n).collect();
    let (mut hit_h, mut hit_l, mut hit_f) = (0usize, 0usize, 0usize);
    for chunk in idxs.chunks(batch_size) {
        let (x, y) = store_batch(store, chunk, index)?;
        let (xh, xl) = eval.decompose(&x, Mode::Eval);
        let (lh, ll) = eval.stream_logits(&xh, &xl, Mode::Eval);
        hit_h += (accuracy(&lh, &y) * y.len() as f64).round() as usize;
        hit_l += (accuracy(&ll, &y) * y.len() as f64).round() as usize;
        let fused = (softmax(&lh) + softmax(&ll)).mapv(|v| 0.5 * v);
        hit_f += (accuracy(&fused, &y) * y.len() as f64).round() as usize;
    }
    let nf = n as f64;
    Ok((hit_h as f64 / nf, hit_l as f64 / nf, hit_f as f64 / nf))
}

/// Trains both stream classifiers with the decomposition trunk frozen.
/// Reported accuracies are measured on `val` when given, else on `train`.
pub fn train_streams(
    eval: &mut DualStreamEvaluator,
    train: &PatchStore,
    val: Option<&PatchStore>,
    cfg: &StreamConfig,
) -> Result<StreamReport> {
    if train.patches.is_empty() {
        return Err(TrainError::Config("empty patch store".into()));
    }
    let index = ClassIndex::new(&train.classes);
    if index.len() != eval.num_classes {
        return Err(TrainError::Config(format!(
            "evaluator has {} classes but store has {}",
            eval.num_classes,
            index.len()
        )));
    }
    eval.e0.set_frozen(true);
    let trunk_before = param_hash(&mut eval.e0);

    let mut opt = Sgd::new(cfg.lr, cfg.momentum, cfg.weight_decay);
    let n = train.patches.len();
    let mut steps = 0u64;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(n, cfg.seed, epoch);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = store_batch(train, chunk, &index)?;
            let (xh, xl) = eval.decompose(&x, Mode::Train);
            let (lh, ll) = eval.stream_logits(&xh, &xl, Mode::Train);
            let (_, gh) = cross_entropy(&lh, &y);
            let (_, gl) = cross_entropy(&ll, &y);
            eval.zero_grad();
            let _ = eval.high.backward(&gh);
            let _ = eval.low.backward(&gl);
            opt.step(eval);
            steps += 1;
            if has_non_finite(eval) {
                return Err(TrainError::NonFinite { phase: "streams", step: steps });
            }
        }
        log::info!("streams epoch {}/{}", epoch + 1, cfg.epochs);
    }

    debug_assert_eq!(param_hash(&mut eval.e0), trunk_before, "frozen trunk moved");
    let measure = val.unwrap_or(train);
    let (acc_high, acc_low, acc_fused) =
        stream_accuracy(eval, measure, &index, cfg.batch_size)?;
    Ok(StreamReport { epochs_run: cfg.epochs, acc_high, acc_low, acc_fused })
}
