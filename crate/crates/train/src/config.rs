//! Hyperparameter sets for every training phase.
//!
//! `standard()` constructors carry the full-scale schedules; `desk()`
//! presets shrink widths, batches, and epoch counts so the whole pipeline
//! runs on one core in minutes. All configs serialize, so runs can archive
//! exactly what they used and accept key=value overrides.

use cama_core::PreprocessorKind;
use cama_nn::ClassifierArch;
use serde::{Deserialize, Serialize};

/// Decomposition-network pretraining (regression onto denoising residuals).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct E0Config {
    pub trunk_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Noise scale of the wavelet–Wiener reference residual.
    pub sigma0: f64,
    pub seed: u64,
}

impl E0Config {
    pub fn standard() -> E0Config {
        E0Config {
            trunk_width: 64,
            epochs: 90,
            batch_size: 128,
            lr: 1e-4,
            weight_decay: 5e-4,
            sigma0: cama_core::WW_SIGMA0,
            seed: 17,
        }
    }

    pub fn desk() -> E0Config {
        E0Config {
            trunk_width: 16,
            epochs: 3,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 5e-4,
            sigma0: cama_core::WW_SIGMA0,
            seed: 17,
        }
    }
}

/// Stream-classifier training on top of the frozen decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamConfig {
    pub arch: ClassifierArch,
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl StreamConfig {
    pub fn standard() -> StreamConfig {
        StreamConfig {
            arch: ClassifierArch::Resnet18,
            width: 64,
            epochs: 90,
            batch_size: 128,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 18,
        }
    }

    pub fn desk() -> StreamConfig {
        StreamConfig {
            arch: ClassifierArch::Small,
            width: 16,
            epochs: 8,
            batch_size: 32,
            lr: 0.02,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 18,
        }
    }
}

/// Adversarial anonymizer training (generator + discriminator).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CamaConfig {
    pub gen_width: usize,
    pub disc_width: usize,
    pub epochs: usize,
    /// Steps per epoch; `None` derives `patches / batch_size`.
    pub steps_per_epoch: Option<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_pix: f64,
    pub lambda_clf: f64,
    pub disc_steps_per_gen_step: usize,
    pub checkpoint_every_steps: u64,
    pub log_every_steps: u64,
    pub seed: u64,
}

impl CamaConfig {
    pub fn standard() -> CamaConfig {
        CamaConfig {
            gen_width: 64,
            disc_width: 64,
            epochs: 200,
            steps_per_epoch: None,
            batch_size: 32,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            lambda_pix: cama_nn::LAMBDA_PIX_DEFAULT,
            lambda_clf: cama_nn::LAMBDA_CLF_DEFAULT,
            disc_steps_per_gen_step: 1,
            checkpoint_every_steps: 1000,
            log_every_steps: 50,
            seed: 19,
        }
    }

    pub fn desk() -> CamaConfig {
        CamaConfig {
            gen_width: 16,
            disc_width: 16,
            epochs: 8,
            steps_per_epoch: None,
            batch_size: 16,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            lambda_pix: cama_nn::LAMBDA_PIX_DEFAULT,
            lambda_clf: cama_nn::LAMBDA_CLF_DEFAULT,
            disc_steps_per_gen_step: 1,
            checkpoint_every_steps: 200,
            log_every_steps: 10,
            seed: 19,
        }
    }
}

/// Target-classifier training (the models the anonymizer is tested against).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetConfig {
    pub arch: ClassifierArch,
    pub width: usize,
    pub preprocessor: PreprocessorKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl TargetConfig {
    pub fn standard() -> TargetConfig {
        TargetConfig {
            arch: ClassifierArch::Resnet18,
            width: 64,
            preprocessor: PreprocessorKind::Rgb,
            epochs: 90,
            batch_size: 128,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 20,
        }
    }

    pub fn desk() -> TargetConfig {
        TargetConfig {
            arch: ClassifierArch::Small,
            width: 16,
            preprocessor: PreprocessorKind::Rgb,
            epochs: 8,
            batch_size: 32,
            lr: 0.02,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 20,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_schedules_hold_published_values() {
        let e0 = E0Config::standard();
        assert_eq!((e0.epochs, e0.batch_size), (90, 128));
        assert_eq!(e0.lr, 1e-4);
        assert_eq!(e0.weight_decay, 5e-4);

        let st = StreamConfig::standard();
        assert_eq!((st.epochs, st.batch_size), (90, 128));
        assert_eq!((st.lr, st.momentum, st.weight_decay), (0.1, 0.9, 5e-4));
        assert_eq!(st.arch, ClassifierArch::Resnet18);

        let cama = CamaConfig::standard();
        assert_eq!((cama.epochs, cama.batch_size), (200, 32));
        assert_eq!((cama.lr, cama.beta1), (2e-4, 0.5));
        assert_eq!((cama.lambda_pix, cama.lambda_clf), (10.0, 0.01));
        assert_eq!(cama.disc_steps_per_gen_step, 1);
        assert_eq!((cama.gen_width, cama.disc_width), (64, 64));

        let tg = TargetConfig::standard();
        assert_eq!((tg.lr, tg.momentum, tg.weight_decay), (0.1, 0.9, 5e-4));
        assert_eq!((tg.epochs, tg.batch_size), (90, 128));
    }

    #[test]
    fn configs_serialize_round_trip() {
        let cfg = CamaConfig::desk();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: CamaConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.gen_width, cfg.gen_width);
        assert_eq!(back.lambda_clf, cfg.lambda_clf);
    }
}
