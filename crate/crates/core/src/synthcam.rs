//! Synthetic camera-model simulator.
//!
//! Renders procedurally generated scenes through a simplified sensor
//! pipeline — gain, gamma, PRNU, shot/readout noise, quantization, CFA
//! demosaicing, vignetting, optional JPEG — so that labeled multi-model
//! datasets exist without any real corpus. Each stage leaves a
//! model-specific, translation-invariant statistical trace; classifiers and
//! the anonymizer only ever see those traces, never absolute positions.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, s};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cfa::{CfaPattern, demosaic_bilinear_array, mosaic};
use crate::dataset::{Manifest, ManifestRow};
use crate::error::{CoreError, Result};
use crate::image::Image;

/// Demosaicing algorithm baked into a camera model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemosaicVariant {
    Bilinear,
    /// Smooth-hue transition: bilinear green, then chroma-ratio
    /// interpolation for red/blue. Couples channels, so its traces differ
    /// from plain bilinear.
    SmoothHue,
}

/// Full parameterization of one synthetic camera model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModelSpec {
    pub model_id: u32,
    /// Per-channel sensor gain g (> 0).
    pub gain: [f64; 3],
    /// Gamma exponent in (0, 2].
    pub gamma: f64,
    /// Seed generating the fixed multiplicative PRNU plane Υ.
    pub prnu_seed: u64,
    /// Standard deviation of Υ (zero-mean).
    pub prnu_std: f64,
    /// Combined shot/readout noise scale Λ.
    pub noise_std: f64,
    /// Quantizer levels (≥ 2), e.g. 256.
    pub quant_levels: u32,
    /// Inverse-quadratic vignette strength (≥ 0; 0 = flat field).
    pub vignette_strength: f64,
    pub demosaic_variant: DemosaicVariant,
    /// JPEG round-trip quality 1..=100; `None` = lossless.
    pub jpeg_quality: Option<u8>,
}

impl CameraModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gain.iter().any(|&g| g <= 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "gain must be positive, got {:?}",
                self.gain
            )));
        }
        if !(0.0..=2.0).contains(&self.gamma) || self.gamma == 0.0 {
            return Err(CoreError::InvalidParameter(format!(
                "gamma must lie in (0, 2], got {}",
                self.gamma
            )));
        }
        if self.prnu_std < 0.0 || self.noise_std < 0.0 || self.vignette_strength < 0.0 {
            return Err(CoreError::InvalidParameter(
                "prnu_std, noise_std and vignette_strength must be >= 0".into(),
            ));
        }
        if self.quant_levels < 2 {
            return Err(CoreError::InvalidParameter(format!(
                "quant_levels must be >= 2, got {}",
                self.quant_levels
            )));
        }
        if let Some(q) = self.jpeg_quality {
            if q == 0 || q > 100 {
                return Err(CoreError::InvalidParameter(format!(
                    "jpeg_quality must be 1..=100, got {q}"
                )));
            }
        }
        Ok(())
    }

    /// A neutral model: unity gain/gamma, no PRNU, no noise, 8-bit
    /// quantizer, bilinear demosaic, lossless.
    pub fn neutral(model_id: u32) -> CameraModelSpec {
        CameraModelSpec {
            model_id,
            gain: [1.0; 3],
            gamma: 1.0,
            prnu_seed: model_id as u64,
            prnu_std: 0.0,
            noise_std: 0.0,
            quant_levels: 256,
            vignette_strength: 0.0,
            demosaic_variant: DemosaicVariant::Bilinear,
            jpeg_quality: None,
        }
    }

    /// A ready-made model family: consecutive ids draw visibly different
    /// gain tilts, gamma, PRNU, noise, vignetting, demosaic variants and
    /// JPEG settings, so any run of ids yields mutually distinguishable
    /// cameras. The tables cycle after six ids (PRNU seeds stay unique).
    pub fn preset(model_id: u32) -> CameraModelSpec {
        let i = model_id as usize;
        let gains: [[f64; 3]; 6] = [
            [1.00, 0.96, 1.05],
            [1.10, 1.00, 0.92],
            [0.94, 1.04, 1.00],
            [1.05, 1.08, 0.97],
            [0.90, 0.96, 1.02],
            [1.12, 0.94, 1.06],
        ];
        let gammas = [0.45, 0.60, 0.80, 1.00, 0.52, 0.70];
        let prnu_stds = [0.015, 0.022, 0.010, 0.027, 0.018, 0.012];
        let noise_stds = [0.004, 0.006, 0.003, 0.008, 0.005, 0.007];
        let vignettes = [0.06, 0.14, 0.0, 0.22, 0.09, 0.17];
        let jpegs = [None, Some(92), Some(85), None, Some(75), Some(95)];
        CameraModelSpec {
            model_id,
            gain: gains[i % 6],
            gamma: gammas[i % 6],
            prnu_seed: 1000 + model_id as u64,
            prnu_std: prnu_stds[i % 6],
            noise_std: noise_stds[i % 6],
            quant_levels: 256,
            vignette_strength: vignettes[i % 6],
            demosaic_variant: if i % 2 == 0 {
                DemosaicVariant::Bilinear
            } else {
                DemosaicVariant::SmoothHue
            },
            jpeg_quality: jpegs[i % 6],
        }
    }

    /// The fixed PRNU plane Υ for a given sensor size: zero-mean Gaussian
    /// with std `prnu_std`, deterministic in `prnu_seed`.
    pub fn prnu_plane(&self, h: usize, w: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.prnu_seed ^ 0x5052_4e55);
        Array2::from_shape_fn((h, w), |_| {
            let z: f64 = rng.sample(StandardNormal);
            z * self.prnu_std
        })
    }
}

/// Scene radiance: strictly positive so the shot-noise term (which divides
/// by u) is defined everywhere.
#[derive(Debug, Clone)]
pub struct Scene {
    pub radiance: Array3<f64>,
    pub seed: u64,
}

impl Scene {
    pub fn new(radiance: Array3<f64>, seed: u64) -> Result<Scene> {
        if radiance.iter().any(|&v| v <= 0.0 || v > 1.0) {
            return Err(CoreError::InvalidParameter(
                "scene radiance must lie in (0, 1]".into(),
            ));
        }
        Ok(Scene { radiance, seed })
    }

    /// Procedural scene: colored base + smooth gradients + band-limited
    /// noise, clamped to [0.02, 1]. Deterministic in `seed`.
    pub fn generate(h: usize, w: usize, seed: u64) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: [f64; 3] = [
            0.3 + 0.4 * rng.gen::<f64>(),
            0.3 + 0.4 * rng.gen::<f64>(),
            0.3 + 0.4 * rng.gen::<f64>(),
        ];
        // Two random linear gradients.
        let grads: Vec<(f64, f64, f64)> = (0..2)
            .map(|_| {
                let theta = rng.gen::<f64>() * std::f64::consts::TAU;
                (theta.cos(), theta.sin(), 0.1 + 0.1 * rng.gen::<f64>())
            })
            .collect();
        // One low-frequency sinusoid.
        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
        let cycles = 1.0 + 2.0 * rng.gen::<f64>();
        let phase = rng.gen::<f64>() * std::f64::consts::TAU;
        let sin_amp = 0.05 + 0.08 * rng.gen::<f64>();
        // Coarse noise grid, bilinearly upsampled ×8.
        let (ch, cw) = (h / 8 + 2, w / 8 + 2);
        let coarse = Array3::from_shape_fn((ch, cw, 3), |_| rng.gen::<f64>() - 0.5);
        let fine_seed: u64 = rng.gen();
        let mut fine_rng = ChaCha8Rng::seed_from_u64(fine_seed);

        let mut out = Array3::<f64>::zeros((h, w, 3));
        for i in 0..h {
            for j in 0..w {
                let (fy, fx) = (i as f64 / h as f64, j as f64 / w as f64);
                let mut lum = 0.0;
                for (dx, dy, amp) in &grads {
                    lum += amp * (dx * fx + dy * fy);
                }
                lum += sin_amp
                    * (std::f64::consts::TAU * cycles * (theta.cos() * fx + theta.sin() * fy)
                        + phase)
                        .sin();
                // Bilinear sample of the coarse grid.
                let (gy, gx) = (i as f64 / 8.0, j as f64 / 8.0);
                let (y0, x0) = (gy.floor() as usize, gx.floor() as usize);
                let (ty, tx) = (gy - y0 as f64, gx - x0 as f64);
                for c in 0..3 {
                    let n00 = coarse[(y0, x0, c)];
                    let n01 = coarse[(y0, x0 + 1, c)];
                    let n10 = coarse[(y0 + 1, x0, c)];
                    let n11 = coarse[(y0 + 1, x0 + 1, c)];
                    let coarse_v = n00 * (1.0 - ty) * (1.0 - tx)
                        + n01 * (1.0 - ty) * tx
                        + n10 * ty * (1.0 - tx)
                        + n11 * ty * tx;
                    let fine: f64 = fine_rng.gen::<f64>() - 0.5;
                    let v = base[c] + lum + 0.2 * coarse_v + 0.03 * fine;
                    out[(i, j, c)] = v.clamp(0.02, 1.0);
                }
            }
        }
        Scene {
            radiance: out,
            seed,
        }
    }
}

/// Inverse-quadratic vignette: `1 / (1 + strength·r²)` with `r` the distance
/// from the image center normalized by the half-diagonal.
fn vignette_factor(strength: f64, i: usize, j: usize, h: usize, w: usize) -> f64 {
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let half_diag = (cy * cy + cx * cx).sqrt().max(1.0);
    let dy = (i as f64 - cy) / half_diag;
    let dx = (j as f64 - cx) / half_diag;
    1.0 / (1.0 + strength * (dy * dy + dx * dx))
}

fn quantize_levels(v: f64, levels: u32) -> f64 {
    let n = (levels - 1) as f64;
    (v.clamp(0.0, 1.0) * n).round() / n
}

/// Smooth-hue demosaic: bilinear green plane, then red/blue reconstructed
/// from bilinearly interpolated chroma ratios against green.
fn demosaic_smooth_hue(plane: &Array2<f64>, pattern: CfaPattern) -> Result<Array3<f64>> {
    const DELTA: f64 = 1e-3;
    let (h, w) = plane.dim();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(CoreError::OddDimensions { h, w });
    }
    // Green first — identical to the bilinear variant's green channel.
    let bilinear = demosaic_bilinear_array(plane, pattern)?;
    let green = bilinear.slice(s![.., .., 1]).to_owned();

    let clampc = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let ratio_at = |i: isize, j: isize| -> f64 {
        let (ci, cj) = (clampc(i, h), clampc(j, w));
        plane[(ci, cj)] / green[(ci, cj)].max(DELTA)
    };
    let diag: [(isize, isize); 4] = [(-1, -1), (-1, 1), (1, -1), (1, 1)];
    let horiz: [(isize, isize); 2] = [(0, -1), (0, 1)];
    let vert: [(isize, isize); 2] = [(-1, 0), (1, 0)];

    let mut out = Array3::<f64>::zeros((h, w, 3));
    for i in 0..h {
        for j in 0..w {
            let (ii, jj) = (i as isize, j as isize);
            let avg_ratio = |offs: &[(isize, isize)]| {
                offs.iter().map(|&(di, dj)| ratio_at(ii + di, jj + dj)).sum::<f64>()
                    / offs.len() as f64
            };
            let g_here = green[(i, j)];
            let site = pattern.channel_at(i, j);
            let (r, b) = match site {
                0 => (plane[(i, j)], g_here * avg_ratio(&diag)),
                2 => (g_here * avg_ratio(&diag), plane[(i, j)]),
                _ => {
                    if i % 2 == 0 {
                        (g_here * avg_ratio(&horiz), g_here * avg_ratio(&vert))
                    } else {
                        (g_here * avg_ratio(&vert), g_here * avg_ratio(&horiz))
                    }
                }
            };
            out[(i, j, 0)] = r.clamp(0.0, 1.0);
            out[(i, j, 1)] = g_here;
            out[(i, j, 2)] = b.clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

fn jpeg_round_trip(img: &Image, quality: u8) -> Result<Image> {
    let rgb = img.to_rgb8();
    let mut buf = Vec::new();
    {
        let mut enc = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut buf, quality);
        enc.encode_image(&rgb)?;
    }
    let decoded = image::load_from_memory(&buf)?.to_rgb8();
    let mut out = Image::from_rgb8(&decoded)?;
    out.label = img.label;
    Ok(out)
}

/// Renders a scene through the full model pipeline. Deterministic in
/// `(scene.seed, spec)`.
pub fn render(scene: &Scene, spec: &CameraModelSpec) -> Result<Image> {
    spec.validate()?;
    let (h, w, _) = scene.radiance.dim();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(CoreError::OddDimensions { h, w });
    }

    // (1) vignette fall-off on the incident light.
    let mut u = scene.radiance.clone();
    if spec.vignette_strength > 0.0 {
        for i in 0..h {
            for j in 0..w {
                let v = vignette_factor(spec.vignette_strength, i, j, h, w);
                for c in 0..3 {
                    u[(i, j, c)] *= v;
                }
            }
        }
    }

    // (2) gamma-compressed sensor response x0 = (g·u)^γ.
    // (3) PRNU + shot/readout noise + quantization.
    let prnu = spec.prnu_plane(h, w);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x4e4f_4953_45u64);
    let mut x = Array3::<f64>::zeros((h, w, 3));
    for i in 0..h {
        for j in 0..w {
            for c in 0..3 {
                let uv = u[(i, j, c)];
                let x0 = (spec.gain[c] * uv).powf(spec.gamma);
                let eta: f64 = noise_rng.sample(StandardNormal);
                let v = x0 * (1.0 + spec.gamma * prnu[(i, j)])
                    + spec.gamma * x0 * spec.noise_std / uv * eta;
                x[(i, j, c)] = quantize_levels(v, spec.quant_levels);
            }
        }
    }

    // (4) CFA sampling + model-specific demosaic.
    let staged = Image::new(x, None)?;
    let plane = mosaic(&staged, CfaPattern::Rggb);
    let rgb = match spec.demosaic_variant {
        DemosaicVariant::Bilinear => demosaic_bilinear_array(&plane, CfaPattern::Rggb)?,
        DemosaicVariant::SmoothHue => demosaic_smooth_hue(&plane, CfaPattern::Rggb)?,
    };
    let img = Image::new(rgb, Some(spec.model_id))?;

    // (5) optional JPEG round trip.
    match spec.jpeg_quality {
        Some(q) => jpeg_round_trip(&img, q),
        None => Ok(img),
    }
}

/// Renders `n_per_model` shared scenes under every spec into
/// `out_dir/model_<id>/img_<k>.png` and writes `manifest.csv`.
///
/// Scenes are shared across models (scene k uses the same radiance for every
/// spec) so content is label-independent by construction.
pub fn make_dataset(
    specs: &[CameraModelSpec],
    n_per_model: usize,
    size: (usize, usize),
    out_dir: &Path,
    base_seed: u64,
) -> Result<Manifest> {
    if specs.len() < 2 {
        return Err(CoreError::InvalidParameter(
            "need at least 2 camera model specs".into(),
        ));
    }
    if n_per_model == 0 {
        return Err(CoreError::InvalidParameter(
            "n_per_model must be >= 1".into(),
        ));
    }
    for s in specs {
        s.validate()?;
        if specs.iter().filter(|t| t.model_id == s.model_id).count() > 1 {
            return Err(CoreError::InvalidParameter(format!(
                "duplicate model_id {}",
                s.model_id
            )));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;
    let mut rows = Vec::with_capacity(specs.len() * n_per_model);
    for k in 0..n_per_model {
        let scene_seed = base_seed.wrapping_add(k as u64);
        let scene = Scene::generate(size.0, size.1, scene_seed);
        for spec in specs {
            let dir = out_dir.join(format!("model_{}", spec.model_id));
            std::fs::create_dir_all(&dir).map_err(|e| CoreError::io(&dir, e))?;
            let img = render(&scene, spec)?;
            let rel = PathBuf::from(format!("model_{}/img_{k}.png", spec.model_id));
            img.save_png(&out_dir.join(&rel))?;
            rows.push(ManifestRow {
                path: rel,
                label: spec.model_id,
                scene_seed: Some(scene_seed),
                device_id: None,
            });
        }
    }
    let manifest = Manifest {
        root: out_dir.to_path_buf(),
        rows,
    };
    manifest.write_csv(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
