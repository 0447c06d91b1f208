//! Adversarial anonymizer training: conditional generator versus
//! matching-aware discriminator, with a frozen evaluator steering the
//! target-conditional classification term.

use std::path::Path;

use cama_core::{PatchStore, sample_training_tuple};
use cama_nn::checkpoint::{CheckpointHeader, apply_state, load_checkpoint, save_checkpoint};
use cama_nn::losses::{
    adversarial_loss, classification_loss, generator_objective, lsgan_toward, pixel_loss,
};
use cama_nn::module::{Layer, LayerExt, Mode};
use cama_nn::nets::{DualStreamEvaluator, Discriminator, Generator, concat_channels, condition_planes};
use cama_nn::optim::{Adam, OptimState, has_non_finite};
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::CamaConfig;
use crate::data::{ClassIndex, patch_chw, stack_chw};
use crate::error::{Result, TrainError};
use crate::logging::{LossLog, LossRow};

/// File names `save`/`resume` use inside a run directory.
pub const GEN_CKPT: &str = "gen.ckpt";
pub const DISC_CKPT: &str = "disc.ckpt";
pub const OPTIM_FILE: &str = "optim.json";
pub const LOSS_FILE: &str = "losses.csv";

/// Loss values from one composite (discriminator + generator) step.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub loss_gen: f64,
    pub loss_adv: f64,
    pub loss_pix: f64,
    pub loss_clf: f64,
    pub loss_dis: f64,
}

#[derive(Debug, Clone)]
pub struct CamaReport {
    pub steps_run: u64,
    pub last: StepStats,
}

#[derive(Serialize, Deserialize)]
struct OptimPair {
    gen: OptimState,
    dis: OptimState,
}

struct Minibatch {
    x: Array4<f64>,
    /// Dense true labels.
    y: Vec<usize>,
    /// Dense transfer targets (may equal `y`).
    target: Vec<usize>,
    /// Dense mismatched labels, never equal to `y` row-wise.
    mis: Vec<usize>,
}

/// Discriminator score maps from the three conditioning arrangements.
#[cfg_attr(not(test), allow(dead_code))]
struct DiscScores {
    real: Array4<f64>,
    fake: Array4<f64>,
    mismatched: Array4<f64>,
}

pub struct CamaTrainer {
    pub gen: Generator,
    pub disc: Discriminator,
    pub eval: DualStreamEvaluator,
    pub cfg: CamaConfig,
    pub index: ClassIndex,
    pub step: u64,
    rng: ChaCha8Rng,
    opt_g: Adam,
    opt_d: Adam,
}

impl CamaTrainer {
    /// Builds fresh generator/discriminator networks conditioned on
    /// `classes` and takes ownership of the (frozen) evaluator.
    pub fn new(
        mut eval: DualStreamEvaluator,
        classes: &[u32],
        cfg: &CamaConfig,
    ) -> Result<CamaTrainer> {
        let index = ClassIndex::new(classes);
        if index.len() < 2 {
            return Err(TrainError::Config(
                "adversarial training needs at least two classes".into(),
            ));
        }
        if index.len() != eval.num_classes {
            return Err(TrainError::Config(format!(
                "evaluator has {} classes but conditioning set has {}",
                eval.num_classes,
                index.len()
            )));
        }
        eval.set_frozen(true);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let gen = Generator::new(index.len(), cfg.gen_width, &mut rng);
        let disc = Discriminator::new(index.len(), cfg.disc_width, &mut rng);
        let opt_g = Adam::new(cfg.lr, cfg.beta1, cfg.beta2, 0.0);
        let opt_d = Adam::new(cfg.lr, cfg.beta1, cfg.beta2, 0.0);
        Ok(CamaTrainer {
            gen,
            disc,
            eval,
            cfg: cfg.clone(),
            index,
            step: 0,
            rng,
            opt_g,
            opt_d,
        })
    }

    fn sample_batch(&mut self, store: &PatchStore) -> Result<Minibatch> {
        let k = self.index.len();
        let q = self.index.labels().to_vec();
        let mut planes = Vec::with_capacity(self.cfg.batch_size);
        let mut y = Vec::with_capacity(self.cfg.batch_size);
        let mut target = Vec::with_capacity(self.cfg.batch_size);
        let mut mis = Vec::with_capacity(self.cfg.batch_size);
        for _ in 0..self.cfg.batch_size {
            let (patch, label, tgt) = sample_training_tuple(store, &q, &mut self.rng)?;
            let yd = self.index.index_of(label)?;
            // Mismatched conditioning draws uniformly over the other classes.
            let mut m = self.rng.gen_range(0..k - 1);
            if m >= yd {
                m += 1;
            }
            planes.push(patch_chw(&patch));
            y.push(yd);
            target.push(self.index.index_of(tgt)?);
            mis.push(m);
        }
        Ok(Minibatch { x: stack_chw(&planes), y, target, mis })
    }

    /// One discriminator update. The three conditioning arrangements are
    /// pushed backward one at a time (each forward overwrites the layer
    /// caches), accumulating into the same gradient buffers; the summed
    /// update equals the joint objective's.
    fn discriminator_update(
        &mut self,
        batch: &Minibatch,
        x_fake: &Array4<f64>,
    ) -> Result<(f64, DiscScores)> {
        let (_, _, h, w) = batch.x.dim();
        let k = self.index.len();
        let cond_real = condition_planes(&batch.y, k, h, w);
        let cond_target = condition_planes(&batch.target, k, h, w);
        let cond_mis = condition_planes(&batch.mis, k, h, w);

        self.disc.zero_grad();
        let real = self.disc.forward_cond(&batch.x, &cond_real, Mode::Train);
        let (l_real, g_real) = lsgan_toward(&real, 1.0);
        let _ = self.disc.backward(&g_real);

        let fake = self.disc.forward_cond(x_fake, &cond_target, Mode::Train);
        let (l_fake, g_fake) = lsgan_toward(&fake, 0.0);
        let _ = self.disc.backward(&g_fake.mapv(|g| 0.5 * g));

        let mismatched = self.disc.forward_cond(&batch.x, &cond_mis, Mode::Train);
        let (l_mis, g_mis) = lsgan_toward(&mismatched, 0.0);
        let _ = self.disc.backward(&g_mis.mapv(|g| 0.5 * g));

        self.opt_d.step(&mut self.disc);
        self.disc.project_constraints();
        debug_assert!(self.disc.constraint_satisfied(1e-9));
        let loss = l_real + 0.5 * (l_fake + l_mis);
        Ok((loss, DiscScores { real, fake, mismatched }))
    }

    /// One generator update, reusing the caches from the `x_fake` forward.
    fn generator_update(
        &mut self,
        batch: &Minibatch,
        x_fake: &Array4<f64>,
    ) -> Result<StepStats> {
        let (_, _, h, w) = batch.x.dim();
        let k = self.index.len();
        let cond_target = condition_planes(&batch.target, k, h, w);

        let scores = self.disc.forward_cond(x_fake, &cond_target, Mode::Train);
        let (loss_adv, g_scores) = adversarial_loss(&scores);
        self.disc.set_frozen(true);
        let g_adv = self.disc.backward_image(&g_scores);
        self.disc.set_frozen(false);

        let (loss_pix, g_pix) = pixel_loss(x_fake, &batch.x);

        let (xh, xl) = self.eval.decompose(x_fake, Mode::Eval);
        let (lh, ll) = self.eval.stream_logits(&xh, &xl, Mode::Eval);
        let (loss_clf, gh, gl) = classification_loss(&lh, &ll, &batch.target);
        let g_clf = self.eval.backward(&concat_channels(&gh, &gl));

        let (lp, lc) = (self.cfg.lambda_pix, self.cfg.lambda_clf);
        let mut g_total = g_adv;
        g_total.scaled_add(lp, &g_pix);
        g_total.scaled_add(lc, &g_clf);

        self.gen.zero_grad();
        let _ = self.gen.backward(&g_total);
        self.opt_g.step(&mut self.gen);

        Ok(StepStats {
            loss_gen: generator_objective(loss_adv, loss_pix, loss_clf, lp, lc),
            loss_adv,
            loss_pix,
            loss_clf,
            loss_dis: 0.0,
        })
    }

    /// One composite step: `disc_steps_per_gen_step` discriminator updates
    /// (each on a fresh minibatch) followed by one generator update on the
    /// last minibatch.
    pub fn train_step(&mut self, store: &PatchStore) -> Result<StepStats> {
        let side = store.patch_size;
        if side < Discriminator::MIN_INPUT || side % 4 != 0 {
            return Err(TrainError::Config(format!(
                "patch size {side} unusable: need a multiple of 4 at least {}",
                Discriminator::MIN_INPUT
            )));
        }
        let mut loss_dis = 0.0;
        let mut last: Option<(Minibatch, Array4<f64>)> = None;
        for _ in 0..self.cfg.disc_steps_per_gen_step.max(1) {
            let batch = self.sample_batch(store)?;
            let (_, _, h, w) = batch.x.dim();
            let cond_target = condition_planes(&batch.target, self.index.len(), h, w);
            let x_fake = self.gen.forward_cond(&batch.x, &cond_target, Mode::Train);
            let (ld, _) = self.discriminator_update(&batch, &x_fake)?;
            loss_dis = ld;
            last = Some((batch, x_fake));
        }
        let (batch, x_fake) = last.expect("at least one discriminator step");
        let mut stats = self.generator_update(&batch, &x_fake)?;
        stats.loss_dis = loss_dis;

        self.step += 1;
        if has_non_finite(&mut self.gen) || has_non_finite(&mut self.disc) {
            return Err(TrainError::NonFinite { phase: "cama", step: self.step });
        }
        Ok(stats)
    }

    /// Full training run. When `out_dir` is given, loss rows and periodic
    /// checkpoints land there ("losses.csv", "gen.ckpt", "disc.ckpt",
    /// "optim.json"); a final checkpoint is always written.
    pub fn run(&mut self, store: &PatchStore, out_dir: Option<&Path>) -> Result<CamaReport> {
        let steps_per_epoch = self
            .cfg
            .steps_per_epoch
            .unwrap_or_else(|| (store.patches.len() / self.cfg.batch_size).max(1));
        let mut log = match out_dir {
            Some(dir) => Some(LossLog::create(dir.join(LOSS_FILE))?),
            None => None,
        };
        let total = self.cfg.epochs as u64 * steps_per_epoch as u64;
        let mut last = StepStats::default();
        for epoch in 0..self.cfg.epochs {
            for _ in 0..steps_per_epoch {
                last = self.train_step(store)?;
                let done = self.step;
                if let Some(log) = log.as_mut() {
                    if done % self.cfg.log_every_steps == 0 || done == total {
                        log.log(&LossRow {
                            step: done,
                            loss_gen: last.loss_gen,
                            loss_adv: last.loss_adv,
                            loss_pix: last.loss_pix,
                            loss_clf: last.loss_clf,
                            loss_dis: last.loss_dis,
                        })?;
                    }
                }
                if let Some(dir) = out_dir {
                    if self.cfg.checkpoint_every_steps > 0
                        && done % self.cfg.checkpoint_every_steps == 0
                    {
                        self.save(dir)?;
                    }
                }
            }
            log::info!(
                "cama epoch {}/{}: gen {:.4} dis {:.4} (adv {:.4} pix {:.4} clf {:.4})",
                epoch + 1,
                self.cfg.epochs,
                last.loss_gen,
                last.loss_dis,
                last.loss_adv,
                last.loss_pix,
                last.loss_clf
            );
        }
        if let Some(dir) = out_dir {
            self.save(dir)?;
        }
        Ok(CamaReport { steps_run: self.step, last })
    }

    /// Writes both network checkpoints plus optimizer state. The training
    /// RNG rides in the generator header so a resumed run replays the same
    /// sample stream.
    pub fn save(&mut self, dir: &Path) -> Result<()> {
        let mut hg = CheckpointHeader::new("generator", self.index.len(), self.cfg.gen_width);
        hg.phase = "cama".into();
        hg.step = self.step;
        hg.rng = Some(self.rng.clone());
        // The label universe rides along so inference tools can map a target
        // label to its condition rank without the training manifest.
        hg.meta.insert("classes".into(), serde_json::json!(self.index.labels()));
        save_checkpoint(dir.join(GEN_CKPT), &hg, &mut self.gen)?;

        let mut hd = CheckpointHeader::new("discriminator", self.index.len(), self.cfg.disc_width);
        hd.phase = "cama".into();
        hd.step = self.step;
        save_checkpoint(dir.join(DISC_CKPT), &hd, &mut self.disc)?;

        let pair = OptimPair { gen: self.opt_g.export_state(), dis: self.opt_d.export_state() };
        let path = dir.join(OPTIM_FILE);
        let file = std::fs::File::create(&path).map_err(|e| TrainError::io(&path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), &pair)?;
        Ok(())
    }

    /// Rebuilds a trainer from `save` output; continues bit-for-bit where
    /// the saved run left off.
    pub fn resume(
        eval: DualStreamEvaluator,
        classes: &[u32],
        cfg: &CamaConfig,
        dir: &Path,
    ) -> Result<CamaTrainer> {
        let mut t = CamaTrainer::new(eval, classes, cfg)?;

        let (hg, state_g) = load_checkpoint(dir.join(GEN_CKPT))?;
        if hg.arch != "generator" || hg.cond_channels != t.index.len() || hg.width != cfg.gen_width
        {
            return Err(TrainError::Config(format!(
                "generator checkpoint mismatch: arch {} cond {} width {}",
                hg.arch, hg.cond_channels, hg.width
            )));
        }
        apply_state(&mut t.gen, &state_g)?;

        let (hd, state_d) = load_checkpoint(dir.join(DISC_CKPT))?;
        if hd.arch != "discriminator"
            || hd.cond_channels != t.index.len()
            || hd.width != cfg.disc_width
        {
            return Err(TrainError::Config(format!(
                "discriminator checkpoint mismatch: arch {} cond {} width {}",
                hd.arch, hd.cond_channels, hd.width
            )));
        }
        // The saved discriminator is already projected; re-projecting would
        // renormalize by a sum that is only approximately 1 and perturb the
        // taps, breaking bit-exact resume.
        apply_state(&mut t.disc, &state_d)?;
        if !t.disc.constraint_satisfied(1e-6) {
            return Err(TrainError::Config(
                "discriminator checkpoint violates the residual constraint".into(),
            ));
        }

        t.rng = hg
            .rng
            .ok_or_else(|| TrainError::Config("checkpoint lacks RNG state".into()))?;
        t.step = hg.step;

        let path = dir.join(OPTIM_FILE);
        let file = std::fs::File::open(&path).map_err(|e| TrainError::io(&path, e))?;
        let pair: OptimPair = serde_json::from_reader(std::io::BufReader::new(file))?;
        t.opt_g.import_state(&pair.gen);
        t.opt_d.import_state(&pair.dis);
        Ok(t)
    }

    /// Runs the generator in inference mode: `targets` are dense class
    /// indices; output pixels are already clamped to `[0, 1]` by the head.
    pub fn anonymize_batch(&mut self, x: &Array4<f64>, targets: &[usize]) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, 3, "anonymizer expects RGB input");
        assert_eq!(targets.len(), n, "one target per sample");
        let cond = condition_planes(targets, self.index.len(), h, w);
        self.gen.forward_cond(x, &cond, Mode::Eval)
    }
}
