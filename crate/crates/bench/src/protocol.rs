//! The anonymization scoring protocol: every image is transformed toward
//! every eligible target label, quantized to 8 bits, and re-classified.

use cama_core::{Image, PatchStore, PreprocessorKind, apply_preprocessor, mean_psnr_capped, psnr};
use cama_nn::losses::argmax_rows;
use cama_nn::module::{Layer, Mode};
use cama_nn::nets::TargetClassifier;
use cama_train::ClassIndex;
use cama_train::data::{hwc_to_chw, stack_chw};

use crate::error::{BenchError, Result};
use crate::report::{Distribution, EvalRow, Overlap};

/// Ceiling applied when averaging PSNR so an identity transform (infinite
/// PSNR) cannot blow up the mean.
pub const PSNR_CAP_DB: f64 = 100.0;

/// A target classifier plus the label space and preprocessor it was
/// trained with.
pub struct ScoringClassifier {
    pub clf: TargetClassifier,
    pub classes: ClassIndex,
    pub preproc: PreprocessorKind,
}

impl ScoringClassifier {
    pub fn new(
        clf: TargetClassifier,
        labels: &[u32],
        preproc: PreprocessorKind,
    ) -> Result<ScoringClassifier> {
        let classes = ClassIndex::new(labels);
        if classes.len() != clf.num_classes {
            return Err(BenchError::Config(format!(
                "classifier has {} outputs but {} labels were given",
                clf.num_classes,
                classes.len()
            )));
        }
        Ok(ScoringClassifier { clf, classes, preproc })
    }

    /// Predicted labels for a batch of images (ties resolve to the lowest
    /// class index via the argmax convention).
    pub fn predict_labels(&mut self, images: &[Image]) -> Result<Vec<u32>> {
        let mut planes = Vec::with_capacity(images.len());
        for img in images {
            planes.push(hwc_to_chw(&apply_preprocessor(self.preproc, img)?));
        }
        let x = stack_chw(&planes);
        let logits = self.clf.forward(&x, Mode::Eval);
        Ok(argmax_rows(&logits)
            .into_iter()
            .map(|d| self.classes.label_at(d))
            .collect())
    }
}

/// The outcome of one `(image, target)` scoring pair.
#[derive(Debug, Clone, Copy)]
pub struct PairOutcome {
    pub truth: u32,
    pub target: u32,
    pub predicted: u32,
}

/// `(tsr, usr)` over pair outcomes: targeted hits predict the transfer
/// target, untargeted hits merely miss the true label.
pub fn success_rates(outcomes: &[PairOutcome]) -> (f64, f64) {
    assert!(!outcomes.is_empty(), "no pairs scored");
    let n = outcomes.len() as f64;
    let targeted = outcomes.iter().filter(|o| o.predicted == o.target).count();
    let untargeted = outcomes.iter().filter(|o| o.predicted != o.truth).count();
    (targeted as f64 / n, untargeted as f64 / n)
}

/// Scores `anonymize` against classifier `f` over `eval_set`.
///
/// Images whose labels all belong to `known_classes` score `k−1` pairs each
/// (every foreign target); images wholly outside score `k` pairs each. Each
/// transformed image is quantized to 8 bits before classification — only
/// the post-quantization prediction counts.
pub fn evaluate_anonymizer(
    anonymize: &mut dyn FnMut(&Image, u32) -> Result<Image>,
    f: &mut ScoringClassifier,
    eval_set: &PatchStore,
    known_classes: &[u32],
    attack_name: &str,
) -> Result<EvalRow> {
    let known = ClassIndex::new(known_classes);
    if known.len() < 2 {
        return Err(BenchError::Config("need at least two known classes".into()));
    }
    if eval_set.patches.is_empty() {
        return Err(BenchError::Config("empty evaluation set".into()));
    }
    for &label in known.labels() {
        if f.classes.index_of(label).is_err() {
            return Err(BenchError::Config(format!(
                "classifier lacks known class {label}"
            )));
        }
    }
    let overlap = if f.classes.labels() == known.labels() {
        Overlap::Complete
    } else {
        Overlap::Partial
    };

    let in_dist = eval_set
        .patches
        .iter()
        .map(|p| p.label.ok_or_else(|| BenchError::Config("unlabeled patch".into())))
        .collect::<Result<Vec<u32>>>()?
        .iter()
        .map(|&l| known.index_of(l).is_ok())
        .collect::<Vec<bool>>();
    let distribution = match (in_dist.iter().all(|&b| b), in_dist.iter().all(|&b| !b)) {
        (true, _) => Distribution::In,
        (_, true) => Distribution::Out,
        _ => {
            return Err(BenchError::Config(
                "evaluation set mixes known and unknown camera models".into(),
            ));
        }
    };

    let mut outcomes = Vec::new();
    let mut psnrs = Vec::new();
    for patch in &eval_set.patches {
        let img = patch.to_image()?;
        let y = patch.label.expect("checked above");
        let targets: Vec<u32> = match distribution {
            Distribution::In => known.labels().iter().copied().filter(|&t| t != y).collect(),
            Distribution::Out => known.labels().to_vec(),
        };
        let mut quantized = Vec::with_capacity(targets.len());
        for &t in &targets {
            let xq = anonymize(&img, t)?.quantized();
            psnrs.push(psnr(&img, &xq)?);
            quantized.push(xq);
        }
        let preds = f.predict_labels(&quantized)?;
        for (&t, p) in targets.iter().zip(preds) {
            outcomes.push(PairOutcome { truth: y, target: t, predicted: p });
        }
    }

    let (tsr, usr) = success_rates(&outcomes);
    let row = EvalRow {
        classifier_arch: f.clf.arch.name().to_string(),
        preproc: f.preproc.to_string(),
        overlap,
        distribution,
        attack: attack_name.to_string(),
        tsr,
        usr,
        mean_psnr: mean_psnr_capped(&psnrs, PSNR_CAP_DB),
        n_images: eval_set.patches.len(),
        n_pairs: outcomes.len(),
    };
    row.validate()?;
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cama_core::Patch;
    use cama_nn::nets::ClassifierArch;
    use cama_nn::{GlobalAvgPool, Linear, Stack};
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two-class store separable by overall brightness: label 1 sits near
    /// 0.3, label 2 near 0.7, with pixel noise on top. Snapped to the 8-bit
    /// grid like any real capture, so an identity transform survives the
    /// scorer's quantization untouched.
    fn toy_store(per_class: usize, seed: u64) -> PatchStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut patches = Vec::new();
        for label in 1..=2u32 {
            for _ in 0..per_class {
                let base = if label == 1 { 0.25 } else { 0.65 } + 0.1 * rng.gen::<f64>();
                let pixels = Array3::from_shape_fn((32, 32, 3), |_| {
                    let v = (base + 0.005 * rng.gen::<f64>()).clamp(0.0, 1.0);
                    f64::from(cama_core::image::quantize_u8(v)) / 255.0
                });
                patches.push(Patch { pixels, label: Some(label), augment_id: 0 });
            }
        }
        PatchStore::from_patches(patches, 32).unwrap()
    }

    /// Hand-built classifier that thresholds the image mean at `theta`:
    /// label 1 below, label 2 above. Perfect on [`toy_store`] by
    /// construction — no training, no flakiness.
    fn mean_threshold_classifier(theta: f64) -> ScoringClassifier {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut fc = Linear::new(3, 2, &mut rng);
        let s = 50.0;
        for c in 0..3 {
            fc.weight.value[[0, c]] = -s / 3.0;
            fc.weight.value[[1, c]] = s / 3.0;
        }
        fc.bias.value[[0]] = s * theta;
        fc.bias.value[[1]] = -s * theta;
        let net = Stack::new().with("gap", GlobalAvgPool::new()).with("fc", fc);
        let clf = TargetClassifier {
            constrained: None,
            net,
            arch: ClassifierArch::Small,
            num_classes: 2,
        };
        ScoringClassifier::new(clf, &[1, 2], PreprocessorKind::Rgb).unwrap()
    }

    fn constant_patch(value: f64, label: u32) -> Patch {
        Patch {
            pixels: Array3::from_elem((32, 32, 3), value),
            label: Some(label),
            augment_id: 0,
        }
    }

    #[test]
    fn hit_list_oracle() {
        // Brute-force enumeration: 3 pairs, one targeted hit, one untargeted.
        let outcomes = [
            PairOutcome { truth: 1, target: 2, predicted: 2 },
            PairOutcome { truth: 1, target: 3, predicted: 1 },
            PairOutcome { truth: 1, target: 2, predicted: 1 },
        ];
        let (tsr, usr) = success_rates(&outcomes);
        assert!((tsr - 1.0 / 3.0).abs() < 1e-15);
        assert!((usr - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identity_anonymizer_scores_zero_against_perfect_classifier() {
        let store = toy_store(8, 60);
        let mut f = mean_threshold_classifier(0.5);
        let originals: Vec<Image> =
            store.patches.iter().map(|p| p.to_image().unwrap()).collect();
        let labels: Vec<u32> = store.patches.iter().map(|p| p.label.unwrap()).collect();
        assert_eq!(f.predict_labels(&originals).unwrap(), labels, "classifier must be perfect");
        let row = evaluate_anonymizer(
            &mut |img, _| Ok(img.clone()),
            &mut f,
            &store,
            &store.classes,
            "identity",
        )
        .unwrap();
        assert_eq!(row.tsr, 0.0);
        assert_eq!(row.usr, 0.0);
        assert_eq!(row.overlap, Overlap::Complete);
        assert_eq!(row.distribution, Distribution::In);
        // k = 2 known classes: one pair per image.
        assert_eq!(row.n_pairs, row.n_images);
        assert_eq!(row.mean_psnr, PSNR_CAP_DB);
    }

    #[test]
    fn oracle_swap_anonymizer_approaches_classifier_accuracy() {
        // Returning a stored image of the target class makes TSR track the
        // classifier's accuracy (here exactly 1).
        let store = toy_store(8, 62);
        let mut f = mean_threshold_classifier(0.5);
        let exemplar = |label: u32| {
            store
                .patches
                .iter()
                .find(|p| p.label == Some(label))
                .unwrap()
                .to_image()
                .unwrap()
        };
        let row = evaluate_anonymizer(
            &mut |_, target| Ok(exemplar(target)),
            &mut f,
            &store,
            &store.classes,
            "oracle-swap",
        )
        .unwrap();
        assert_eq!(row.tsr, 1.0);
        assert_eq!(row.usr, 1.0);
    }

    #[test]
    fn pair_counts_follow_distribution() {
        let store = toy_store(5, 64);
        let mut f = mean_threshold_classifier(0.5);
        // Out-of-distribution: relabel a copy of the store with labels the
        // classifier/known set does not contain.
        let mut foreign = store.patches.clone();
        for p in &mut foreign {
            p.label = Some(p.label.unwrap() + 10);
        }
        let foreign = PatchStore::from_patches(foreign, 32).unwrap();
        let known: Vec<u32> = store.classes.clone();

        let row_in = evaluate_anonymizer(
            &mut |img, _| Ok(img.clone()),
            &mut f,
            &store,
            &known,
            "identity",
        )
        .unwrap();
        assert_eq!(row_in.n_pairs, row_in.n_images * (known.len() - 1));

        let row_out = evaluate_anonymizer(
            &mut |img, _| Ok(img.clone()),
            &mut f,
            &foreign,
            &known,
            "identity",
        )
        .unwrap();
        assert_eq!(row_out.distribution, Distribution::Out);
        assert_eq!(row_out.n_pairs, row_out.n_images * known.len());
        // The true label is never expressible by the classifier, so every
        // pair counts as an untargeted success; each image still hits
        // exactly one of the two enumerated targets.
        assert_eq!(row_out.usr, 1.0);
        assert_eq!(row_out.tsr, 0.5);
    }

    #[test]
    fn missing_known_class_is_rejected() {
        let store = toy_store(2, 66);
        let mut f = mean_threshold_classifier(0.5);
        let err = evaluate_anonymizer(
            &mut |img, _| Ok(img.clone()),
            &mut f,
            &store,
            &[1, 2, 3],
            "identity",
        )
        .unwrap_err();
        assert!(matches!(err, BenchError::Config(_)));
    }

    #[test]
    fn quantization_is_what_gets_classified() {
        // The anonymizer emits images whose mean sits just above the 0.51
        // decision threshold, but 8-bit rounding lands them on 130/255 —
        // just below it. Unquantized they fool the classifier; scored
        // (quantized) they must not.
        let mut f = mean_threshold_classifier(0.51);
        let eval_set =
            PatchStore::from_patches(vec![constant_patch(76.0 / 255.0, 1); 3], 32).unwrap();
        let fool = Image::new(Array3::from_elem((32, 32, 3), 0.5105), None).unwrap();
        assert_eq!(f.predict_labels(&[fool.clone()]).unwrap(), vec![2]);
        assert_eq!(f.predict_labels(&[fool.quantized()]).unwrap(), vec![1]);

        let row = evaluate_anonymizer(
            &mut |_, _| Ok(fool.clone()),
            &mut f,
            &eval_set,
            &[1, 2],
            "boundary",
        )
        .unwrap();
        assert_eq!(row.tsr, 0.0);
        assert_eq!(row.usr, 0.0);
        assert_eq!(row.n_pairs, row.n_images);
        assert!(row.mean_psnr < 20.0, "psnr {}", row.mean_psnr);
    }
}
