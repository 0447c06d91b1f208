//! Optimizers with per-parameter state keyed by qualified name, plus
//! parameter hashing for isolation and determinism checks.

use std::collections::HashMap;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::module::Layer;

/// Serializable optimizer state: moment/velocity tensors flattened with
/// their shapes, sorted by parameter name for stable output.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OptimState {
    pub t: u64,
    pub slots_a: Vec<(String, Vec<usize>, Vec<f64>)>,
    pub slots_b: Vec<(String, Vec<usize>, Vec<f64>)>,
}

fn export_map(m: &HashMap<String, ArrayD<f64>>) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let mut v: Vec<_> = m
        .iter()
        .map(|(k, a)| (k.clone(), a.shape().to_vec(), a.iter().copied().collect()))
        .collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

fn import_map(slots: &[(String, Vec<usize>, Vec<f64>)]) -> HashMap<String, ArrayD<f64>> {
    slots
        .iter()
        .map(|(k, sh, d)| {
            (
                k.clone(),
                ArrayD::from_shape_vec(sh.clone(), d.clone()).expect("slot shape"),
            )
        })
        .collect()
}

/// SGD with classical momentum and L2 weight decay folded into the gradient.
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: HashMap<String, ArrayD<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Sgd {
        Sgd { lr, momentum, weight_decay, velocity: HashMap::new() }
    }

    pub fn step(&mut self, layer: &mut dyn Layer) {
        let (lr, mom, wd) = (self.lr, self.momentum, self.weight_decay);
        let velocity = &mut self.velocity;
        layer.visit_params(&mut |name, p| {
            if p.frozen {
                return;
            }
            let v = velocity
                .entry(name.to_string())
                .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));
            ndarray::Zip::from(&mut p.value)
                .and(v)
                .and(&p.grad)
                .for_each(|w, vel, &g| {
                    *vel = mom * *vel + g + wd * *w;
                    *w -= lr * *vel;
                });
        });
    }

    pub fn export_state(&self) -> OptimState {
        OptimState { t: 0, slots_a: export_map(&self.velocity), slots_b: Vec::new() }
    }

    pub fn import_state(&mut self, s: &OptimState) {
        self.velocity = import_map(&s.slots_a);
    }
}

/// Adam with bias correction; weight decay (if any) is L2, added to the
/// gradient before the moment updates.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: HashMap<String, ArrayD<f64>>,
    v: HashMap<String, ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, weight_decay: f64) -> Adam {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn step(&mut self, layer: &mut dyn Layer) {
        self.t += 1;
        let (lr, b1, b2, eps, wd) = (self.lr, self.beta1, self.beta2, self.eps, self.weight_decay);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let (ms, vs) = (&mut self.m, &mut self.v);
        layer.visit_params(&mut |name, p| {
            if p.frozen {
                return;
            }
            let m = ms
                .entry(name.to_string())
                .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));
            let v = vs
                .entry(name.to_string())
                .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));
            ndarray::Zip::from(&mut p.value)
                .and(m)
                .and(v)
                .and(&p.grad)
                .for_each(|w, m, v, &g0| {
                    let g = g0 + wd * *w;
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *w -= lr * mhat / (vhat.sqrt() + eps);
                });
        });
    }

    pub fn export_state(&self) -> OptimState {
        OptimState { t: self.t, slots_a: export_map(&self.m), slots_b: export_map(&self.v) }
    }

    pub fn import_state(&mut self, s: &OptimState) {
        self.t = s.t;
        self.m = import_map(&s.slots_a);
        self.v = import_map(&s.slots_b);
    }
}

/// SHA-256 over every parameter and buffer (names, shapes, and little-endian
/// value bytes) in visitation order. Two models hash equal iff their
/// serialized state is identical.
pub fn param_hash(layer: &mut dyn Layer) -> String {
    let mut hasher = Sha256::new();
    let digest_array = |hasher: &mut Sha256, name: &str, a: &ArrayD<f64>| {
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
        for &d in a.shape() {
            hasher.update((d as u64).to_le_bytes());
        }
        for &v in a.iter() {
            hasher.update(v.to_le_bytes());
        }
    };
    layer.visit_params(&mut |name, p| digest_array(&mut hasher, name, &p.value));
    hasher.update([1u8]);
    layer.visit_buffers(&mut |name, b| digest_array(&mut hasher, name, b));
    hex::encode(hasher.finalize())
}

/// Largest absolute gradient entry; NaN propagates as NaN.
pub fn max_abs_grad(layer: &mut dyn Layer) -> f64 {
    let mut worst = 0.0_f64;
    layer.visit_params(&mut |_, p| {
        for &g in p.grad.iter() {
            if g.is_nan() {
                worst = f64::NAN;
            } else if !worst.is_nan() {
                worst = worst.max(g.abs());
            }
        }
    });
    worst
}

/// True if any parameter value or gradient is non-finite.
pub fn has_non_finite(layer: &mut dyn Layer) -> bool {
    let mut bad = false;
    layer.visit_params(&mut |_, p| {
        bad |= p.value.iter().any(|v| !v.is_finite());
        bad |= p.grad.iter().any(|v| !v.is_finite());
    });
    bad
}
