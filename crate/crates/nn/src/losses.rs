//! Training objectives and their analytic gradients.
//!
//! All losses are batch means. Each function returns the scalar loss and the
//! gradient with respect to the tensor the caller optimizes, so training
//! loops never differentiate anything themselves.

use ndarray::Array4;

/// Default pixel-loss weight in the generator objective.
pub const LAMBDA_PIX_DEFAULT: f64 = 10.0;
/// Default classification-loss weight in the generator objective.
pub const LAMBDA_CLF_DEFAULT: f64 = 0.01;

/// Probabilities below this are clamped before the log in classification
/// losses; gradients vanish on clamped samples.
pub const PROB_EPS: f64 = 1e-12;

/// Least-squares GAN term `mean((s − target)²)` over every score-map
/// element, with gradient `2(s − target)/n`.
pub fn lsgan_toward(scores: &Array4<f64>, target: f64) -> (f64, Array4<f64>) {
    let n = scores.len() as f64;
    assert!(n > 0.0);
    let loss = scores.iter().map(|s| (s - target).powi(2)).sum::<f64>() / n;
    let grad = scores.mapv(|s| 2.0 * (s - target) / n);
    (loss, grad)
}

/// Generator adversarial term: fake-and-matched scores pushed toward 1.
pub fn adversarial_loss(fake_scores: &Array4<f64>) -> (f64, Array4<f64>) {
    lsgan_toward(fake_scores, 1.0)
}

/// Matching-aware discriminator loss. Real-and-matched scores are pushed
/// toward 1; fake-and-matched and real-but-mismatched scores toward 0, each
/// at half weight.
pub fn discriminator_loss(
    real_matched: &Array4<f64>,
    fake_matched: &Array4<f64>,
    real_mismatched: &Array4<f64>,
) -> (f64, Array4<f64>, Array4<f64>, Array4<f64>) {
    let (l_real, g_real) = lsgan_toward(real_matched, 1.0);
    let (l_fake, g_fake) = lsgan_toward(fake_matched, 0.0);
    let (l_mis, g_mis) = lsgan_toward(real_mismatched, 0.0);
    let loss = l_real + 0.5 * (l_fake + l_mis);
    (loss, g_real, g_fake.mapv(|v| 0.5 * v), g_mis.mapv(|v| 0.5 * v))
}

/// Mean absolute error with gradient wrt the first argument
/// (`sign(x' − x)/n`, zero on exact ties).
pub fn pixel_loss(x_prime: &Array4<f64>, x: &Array4<f64>) -> (f64, Array4<f64>) {
    assert_eq!(x_prime.dim(), x.dim(), "pixel loss shape mismatch");
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array4::<f64>::zeros(x.raw_dim());
    ndarray::Zip::from(&mut grad)
        .and(x_prime)
        .and(x)
        .for_each(|g, &a, &b| {
            let d = a - b;
            loss += d.abs();
            *g = if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            };
        });
    (loss / n, grad)
}

fn check_logits(logits: &Array4<f64>) -> (usize, usize) {
    let (n, k, h, w) = logits.dim();
    assert_eq!((h, w), (1, 1), "logits must be (N, K, 1, 1)");
    (n, k)
}

/// Row-wise softmax over (N, K, 1, 1) logits.
pub fn softmax(logits: &Array4<f64>) -> Array4<f64> {
    let (n, k) = check_logits(logits);
    let mut out = Array4::<f64>::zeros((n, k, 1, 1));
    for nn in 0..n {
        let mut max = f64::NEG_INFINITY;
        for kk in 0..k {
            max = max.max(logits[(nn, kk, 0, 0)]);
        }
        let mut z = 0.0;
        for kk in 0..k {
            let e = (logits[(nn, kk, 0, 0)] - max).exp();
            out[(nn, kk, 0, 0)] = e;
            z += e;
        }
        for kk in 0..k {
            out[(nn, kk, 0, 0)] /= z;
        }
    }
    out
}

/// Mean cross-entropy over the batch with gradient `(softmax − onehot)/N`.
/// `labels` are 0-based class indices.
pub fn cross_entropy(logits: &Array4<f64>, labels: &[usize]) -> (f64, Array4<f64>) {
    let (n, k) = check_logits(logits);
    assert_eq!(labels.len(), n, "one label per row");
    let p = softmax(logits);
    let mut loss = 0.0;
    let mut grad = p.clone();
    for (nn, &y) in labels.iter().enumerate() {
        assert!(y < k, "label {y} out of range for {k} classes");
        loss -= p[(nn, y, 0, 0)].max(PROB_EPS).ln();
        grad[(nn, y, 0, 0)] -= 1.0;
    }
    let inv = 1.0 / n as f64;
    (loss * inv, grad.mapv(|v| v * inv))
}

/// Dual-stream classification loss: average of the two streams' negative
/// log-likelihoods of the target label, halved. Returns the loss and the
/// gradients wrt each stream's logits.
pub fn classification_loss(
    logits_h: &Array4<f64>,
    logits_l: &Array4<f64>,
    labels: &[usize],
) -> (f64, Array4<f64>, Array4<f64>) {
    let (n, k) = check_logits(logits_h);
    assert_eq!(check_logits(logits_l), (n, k), "stream logit shapes differ");
    assert_eq!(labels.len(), n);
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(2);
    for logits in [logits_h, logits_l] {
        let p = softmax(logits);
        let mut grad = Array4::<f64>::zeros((n, k, 1, 1));
        for (nn, &y) in labels.iter().enumerate() {
            assert!(y < k, "label {y} out of range for {k} classes");
            let py = p[(nn, y, 0, 0)];
            if py <= PROB_EPS {
                // Clamped: loss plateaus, gradient vanishes for this sample.
                loss += -PROB_EPS.ln();
            } else {
                loss += -py.ln();
                for kk in 0..k {
                    grad[(nn, kk, 0, 0)] = p[(nn, kk, 0, 0)];
                }
                grad[(nn, y, 0, 0)] -= 1.0;
            }
        }
        grads.push(grad);
    }
    let scale = 0.5 / n as f64;
    let g_l = grads.pop().unwrap().mapv(|v| v * scale);
    let g_h = grads.pop().unwrap().mapv(|v| v * scale);
    (loss * scale, g_h, g_l)
}

/// Full generator objective given the three component losses.
pub fn generator_objective(adv: f64, pix: f64, clf: f64, lambda_pix: f64, lambda_clf: f64) -> f64 {
    adv + lambda_pix * pix + lambda_clf * clf
}

/// Row-wise argmax; ties resolve to the lowest index.
pub fn argmax_rows(logits: &Array4<f64>) -> Vec<usize> {
    let (n, k) = check_logits(logits);
    (0..n)
        .map(|nn| {
            let mut best = 0;
            for kk in 1..k {
                if logits[(nn, kk, 0, 0)] > logits[(nn, best, 0, 0)] {
                    best = kk;
                }
            }
            best
        })
        .collect()
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(logits: &Array4<f64>, labels: &[usize]) -> f64 {
    let preds = argmax_rows(logits);
    assert_eq!(preds.len(), labels.len());
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randn(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn(shape, |_| r.gen::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn lsgan_closed_forms() {
        let zeros = Array4::zeros((2, 1, 3, 3));
        let (l, g) = lsgan_toward(&zeros, 1.0);
        assert!((l - 1.0).abs() < 1e-12);
        assert!((g[(0, 0, 0, 0)] + 2.0 / 18.0).abs() < 1e-12);
        let halves = Array4::from_elem((1, 1, 2, 2), 0.5);
        let (l, _) = lsgan_toward(&halves, 1.0);
        assert!((l - 0.25).abs() < 1e-12);
    }

    #[test]
    fn discriminator_loss_combines_three_terms() {
        // real→0.8, fake→0.3, mismatched→0.4, single elements:
        // (0.8−1)² + ½(0.3² + 0.4²) = 0.04 + ½·0.25 = 0.165.
        let r = Array4::from_elem((1, 1, 1, 1), 0.8);
        let f = Array4::from_elem((1, 1, 1, 1), 0.3);
        let m = Array4::from_elem((1, 1, 1, 1), 0.4);
        let (l, gr, gf, gm) = discriminator_loss(&r, &f, &m);
        assert!((l - 0.165).abs() < 1e-12);
        assert!((gr[(0, 0, 0, 0)] - 2.0 * (0.8 - 1.0)).abs() < 1e-12);
        assert!((gf[(0, 0, 0, 0)] - 0.5 * 2.0 * 0.3).abs() < 1e-12);
        assert!((gm[(0, 0, 0, 0)] - 0.5 * 2.0 * 0.4).abs() < 1e-12);
    }

    #[test]
    fn pixel_loss_mean_abs_and_sign_grad() {
        let a = ndarray::arr1(&[0.5, 0.2, 0.7, 0.7])
            .into_shape_with_order((1, 1, 2, 2))
            .unwrap();
        let b = ndarray::arr1(&[0.4, 0.4, 0.7, 0.9])
            .into_shape_with_order((1, 1, 2, 2))
            .unwrap();
        let (l, g) = pixel_loss(&a, &b);
        assert!((l - (0.1 + 0.2 + 0.0 + 0.2) / 4.0).abs() < 1e-12);
        assert_eq!(g[(0, 0, 0, 0)], 0.25);
        assert_eq!(g[(0, 0, 0, 1)], -0.25);
        assert_eq!(g[(0, 0, 1, 0)], 0.0);
        assert_eq!(g[(0, 0, 1, 1)], -0.25);
    }

    #[test]
    fn uniform_logits_give_log_k_classification_loss() {
        // Six equal logits in both streams: loss = −½(log⅙ + log⅙) = log 6.
        let logits = Array4::zeros((4, 6, 1, 1));
        let (l, gh, gl) = classification_loss(&logits, &logits, &[0, 3, 5, 2]);
        assert!((l - 6.0_f64.ln()).abs() < 1e-10, "{l}");
        // Gradient: ½(p − onehot)/N per stream.
        let expect = 0.5 / 4.0 * (1.0 / 6.0 - 1.0);
        assert!((gh[(0, 0, 0, 0)] - expect).abs() < 1e-12);
        assert!((gl[(1, 3, 0, 0)] - expect).abs() < 1e-12);
    }

    #[test]
    fn classification_loss_known_probability_pair() {
        // pH[y]=0.5, pL[y]=0.25 ⇒ loss = −½(ln½ + ln¼) ≈ 1.0397207708399179.
        let lh = ndarray::arr1(&[0.0, 0.0])
            .into_shape_with_order((1, 2, 1, 1))
            .unwrap();
        let ll = ndarray::arr1(&[0.0, 3.0_f64.ln()])
            .into_shape_with_order((1, 2, 1, 1))
            .unwrap();
        let (l, _, _) = classification_loss(&lh, &ll, &[0]);
        assert!((l - 1.0397207708399179).abs() < 1e-9, "{l}");
    }

    #[test]
    fn classification_grad_matches_finite_difference() {
        let lh = randn((3, 5, 1, 1), 1);
        let ll = randn((3, 5, 1, 1), 2);
        let labels = [2usize, 0, 4];
        let (_, gh, gl) = classification_loss(&lh, &ll, &labels);
        let h = 1e-6;
        for (stream, grad, other) in [(0, &gh, &ll), (1, &gl, &lh)] {
            for idx in [(0, 2, 0, 0), (1, 1, 0, 0), (2, 4, 0, 0)] {
                let base = if stream == 0 { &lh } else { &ll };
                let mut p = base.clone();
                p[idx] += h;
                let mut m = base.clone();
                m[idx] -= h;
                let (fp, fm) = if stream == 0 {
                    (
                        classification_loss(&p, other, &labels).0,
                        classification_loss(&m, other, &labels).0,
                    )
                } else {
                    (
                        classification_loss(other, &p, &labels).0,
                        classification_loss(other, &m, &labels).0,
                    )
                };
                let num = (fp - fm) / (2.0 * h);
                assert!((num - grad[idx]).abs() < 1e-6, "stream {stream} {idx:?}");
            }
        }
    }

    #[test]
    fn clamped_probability_freezes_gradient() {
        // Target logit pushed far below the rest: p[y] underflows the clamp.
        let mut lh = Array4::zeros((1, 2, 1, 1));
        lh[(0, 0, 0, 0)] = -80.0;
        let (l, gh, _) = classification_loss(&lh, &Array4::zeros((1, 2, 1, 1)), &[0]);
        assert!(l.is_finite());
        assert_eq!(gh[(0, 0, 0, 0)], 0.0);
    }

    #[test]
    fn generator_objective_weighted_sum() {
        let l = generator_objective(1.0, 0.1, 2.0, LAMBDA_PIX_DEFAULT, LAMBDA_CLF_DEFAULT);
        assert!((l - 2.02).abs() < 1e-9);
        assert_eq!(generator_objective(0.0, 0.0, 5.0, 10.0, 0.0), 0.0);
    }

    #[test]
    fn cross_entropy_uniform_and_grad() {
        let logits = Array4::zeros((2, 4, 1, 1));
        let (l, g) = cross_entropy(&logits, &[1, 3]);
        assert!((l - 4.0_f64.ln()).abs() < 1e-12);
        assert!((g[(0, 1, 0, 0)] - (0.25 - 1.0) / 2.0).abs() < 1e-12);
        assert!((g[(0, 0, 0, 0)] - 0.25 / 2.0).abs() < 1e-12);
        let l2 = randn((4, 3, 1, 1), 3);
        let (_, g2) = cross_entropy(&l2, &[0, 1, 2, 0]);
        let h = 1e-6;
        for idx in [(0, 0, 0, 0), (2, 1, 0, 0), (3, 2, 0, 0)] {
            let mut p = l2.clone();
            p[idx] += h;
            let mut m = l2.clone();
            m[idx] -= h;
            let num =
                (cross_entropy(&p, &[0, 1, 2, 0]).0 - cross_entropy(&m, &[0, 1, 2, 0]).0)
                    / (2.0 * h);
            assert!((num - g2[idx]).abs() < 1e-6);
        }
    }

    #[test]
    fn accuracy_ties_resolve_to_lowest_index() {
        let mut logits = Array4::zeros((2, 3, 1, 1));
        logits[(1, 2, 0, 0)] = 1.0;
        assert_eq!(argmax_rows(&logits), vec![0, 2]);
        assert_eq!(accuracy(&logits, &[0, 2]), 1.0);
        assert_eq!(accuracy(&logits, &[1, 2]), 0.5);
    }

    #[test]
    fn batch_mean_consistency_under_duplication() {
        // Duplicating every row must leave all batch-mean losses unchanged.
        let lh = randn((2, 4, 1, 1), 4);
        let ll = randn((2, 4, 1, 1), 5);
        let double = |a: &Array4<f64>| {
            ndarray::concatenate(ndarray::Axis(0), &[a.view(), a.view()])
                .unwrap()
                .as_standard_layout()
                .to_owned()
        };
        let (l1, _, _) = classification_loss(&lh, &ll, &[1, 2]);
        let (l2, _, _) = classification_loss(&double(&lh), &double(&ll), &[1, 2, 1, 2]);
        assert!((l1 - l2).abs() < 1e-12);
        let s = randn((2, 1, 3, 3), 6);
        let (a1, _) = adversarial_loss(&s);
        let (a2, _) = adversarial_loss(&double(&s));
        assert!((a1 - a2).abs() < 1e-12);
    }
}
