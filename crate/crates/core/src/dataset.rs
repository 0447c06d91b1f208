//! Corpus manifests, the q_data / p_data / p_test split discipline,
//! training-tuple sampling, and condition-plane encoding.
//!
//! Split semantics: `q_data` is the attacker-known training pool over the
//! label subset `q_classes`; `p_data` trains target classifiers over the
//! superset `p_classes`; `p_test` evaluates. The three sets never share an
//! image (nor a capture device, when device metadata is present).

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::image::Image;
use crate::patches::{Patch, extract_patches};

/// One image entry. `path` is stored relative to the manifest root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: PathBuf,
    pub label: u32,
    pub scene_seed: Option<u64>,
    pub device_id: Option<String>,
}

/// An image corpus: a root directory plus relative rows.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    /// Absolute path of a row.
    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        self.root.join(&row.path)
    }

    /// Writes `path,label,scene_seed[,device_id]` CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let any_device = self.rows.iter().any(|r| r.device_id.is_some());
        let mut w = csv::Writer::from_path(path).map_err(|e| CoreError::Manifest(e.to_string()))?;
        let mut header = vec!["path", "label", "scene_seed"];
        if any_device {
            header.push("device_id");
        }
        w.write_record(&header)
            .map_err(|e| CoreError::Manifest(e.to_string()))?;
        for r in &self.rows {
            let seed = r.scene_seed.map(|s| s.to_string()).unwrap_or_default();
            let mut rec = vec![
                r.path.to_string_lossy().into_owned(),
                r.label.to_string(),
                seed,
            ];
            if any_device {
                rec.push(r.device_id.clone().unwrap_or_default());
            }
            w.write_record(&rec)
                .map_err(|e| CoreError::Manifest(e.to_string()))?;
        }
        w.flush().map_err(|e| CoreError::io(path, e))
    }

    /// Reads a manifest CSV; `root` becomes the CSV's parent directory.
    pub fn read_csv(path: &Path) -> Result<Manifest> {
        let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let headers = rdr
            .headers()
            .map_err(|e| CoreError::Manifest(e.to_string()))?
            .clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(pi), Some(li)) = (col("path"), col("label")) else {
            return Err(CoreError::Manifest(format!(
                "{}: manifest needs 'path' and 'label' columns, got {:?}",
                path.display(),
                headers
            )));
        };
        let si = col("scene_seed");
        let di = col("device_id");
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| CoreError::Manifest(e.to_string()))?;
            let label: u32 = rec
                .get(li)
                .unwrap_or("")
                .parse()
                .map_err(|_| CoreError::Manifest(format!("bad label in {}", path.display())))?;
            let scene_seed = si
                .and_then(|i| rec.get(i))
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<u64>().map_err(|_| {
                        CoreError::Manifest(format!("bad scene_seed in {}", path.display()))
                    })
                })
                .transpose()?;
            let device_id = di
                .and_then(|i| rec.get(i))
                .filter(|s| !s.is_empty())
                .map(str::to_owned);
            rows.push(ManifestRow {
                path: PathBuf::from(rec.get(pi).unwrap_or("")),
                label,
                scene_seed,
                device_id,
            });
        }
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(Manifest { root, rows })
    }

    /// Ingests a directory-per-class layout: `root/<name>_<label>/...` or
    /// `root/<label>/...` with PNG/JPEG files inside.
    pub fn from_class_dirs(root: &Path) -> Result<Manifest> {
        let mut rows = Vec::new();
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
            .map_err(|e| CoreError::io(root, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let name = dir.file_name().unwrap_or_default().to_string_lossy();
            let label: u32 = name
                .rsplit('_')
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| {
                    CoreError::Manifest(format!(
                        "class directory '{name}' has no trailing integer label"
                    ))
                })?;
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| CoreError::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("png" | "jpg" | "jpeg" | "PNG" | "JPG" | "JPEG")
                    )
                })
                .collect();
            files.sort();
            for f in files {
                let rel = f.strip_prefix(root).unwrap_or(&f).to_path_buf();
                rows.push(ManifestRow {
                    path: rel,
                    label,
                    scene_seed: None,
                    device_id: None,
                });
            }
        }
        Ok(Manifest {
            root: root.to_path_buf(),
            rows,
        })
    }
}

/// How many images each split takes from every class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SplitPolicy {
    /// Per-class fractions of the class total (rounded); remainder → p_data.
    Fractions { q: f64, test: f64 },
    /// Explicit per-class counts; remainder → p_data. Classes absent from
    /// `q` take 0 for q_data.
    PerClassCounts {
        q: BTreeMap<u32, usize>,
        test: BTreeMap<u32, usize>,
    },
}

/// The three disjoint image sets plus their label universes.
#[derive(Debug, Clone)]
pub struct SplitPlan {
    pub q_classes: Vec<u32>,
    pub p_classes: Vec<u32>,
    pub q_data: Vec<ManifestRow>,
    pub p_data: Vec<ManifestRow>,
    pub p_test: Vec<ManifestRow>,
    pub root: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub q_data: usize,
    pub p_data: usize,
    pub p_test: usize,
}

/// Per-class and total counts, serializable as the split report JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitReport {
    pub seed: u64,
    pub per_class: BTreeMap<u32, ClassCounts>,
    pub totals: ClassCounts,
}

impl SplitPlan {
    pub fn report(&self, seed: u64) -> SplitReport {
        let mut per_class: BTreeMap<u32, ClassCounts> = BTreeMap::new();
        for c in &self.p_classes {
            per_class.insert(*c, ClassCounts::default());
        }
        for r in &self.q_data {
            per_class.entry(r.label).or_default().q_data += 1;
        }
        for r in &self.p_data {
            per_class.entry(r.label).or_default().p_data += 1;
        }
        for r in &self.p_test {
            per_class.entry(r.label).or_default().p_test += 1;
        }
        let totals = ClassCounts {
            q_data: self.q_data.len(),
            p_data: self.p_data.len(),
            p_test: self.p_test.len(),
        };
        SplitReport {
            seed,
            per_class,
            totals,
        }
    }
}

fn class_rng(seed: u64, class: u32) -> ChaCha8Rng {
    // SplitMix-style mixing keeps per-class streams independent of class
    // order and of other classes.
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(class as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

fn want_counts(
    policy: &SplitPolicy,
    class: u32,
    total: usize,
    in_q: bool,
) -> (usize, usize) {
    match policy {
        SplitPolicy::Fractions { q, test } => {
            let tn = (total as f64 * test).round() as usize;
            let qn = if in_q {
                (total as f64 * q).round() as usize
            } else {
                0
            };
            (qn, tn)
        }
        SplitPolicy::PerClassCounts { q, test } => (
            if in_q {
                q.get(&class).copied().unwrap_or(0)
            } else {
                0
            },
            test.get(&class).copied().unwrap_or(0),
        ),
    }
}

/// Builds the three disjoint splits. Deterministic given `seed`; classes
/// outside `p_classes` are dropped; any class whose required split would be
/// empty is rejected.
pub fn build_splits(
    manifest: &Manifest,
    q_classes: &[u32],
    p_classes: &[u32],
    policy: &SplitPolicy,
    seed: u64,
) -> Result<SplitPlan> {
    let mut q_classes: Vec<u32> = q_classes.to_vec();
    let mut p_classes: Vec<u32> = p_classes.to_vec();
    q_classes.sort_unstable();
    q_classes.dedup();
    p_classes.sort_unstable();
    p_classes.dedup();
    for qc in &q_classes {
        if !p_classes.contains(qc) {
            return Err(CoreError::InvalidParameter(format!(
                "q class {qc} is not contained in p classes"
            )));
        }
    }
    let mut plan = SplitPlan {
        q_classes: q_classes.clone(),
        p_classes: p_classes.clone(),
        q_data: Vec::new(),
        p_data: Vec::new(),
        p_test: Vec::new(),
        root: manifest.root.clone(),
    };
    let mut warned_fallback = false;
    for &class in &p_classes {
        let mut rows: Vec<ManifestRow> = manifest
            .rows
            .iter()
            .filter(|r| r.label == class)
            .cloned()
            .collect();
        if rows.is_empty() {
            return Err(CoreError::EmptyClass {
                label: class,
                split: "manifest".into(),
            });
        }
        rows.sort_by(|a, b| a.path.cmp(&b.path));
        let in_q = q_classes.contains(&class);
        let (qn, tn) = want_counts(policy, class, rows.len(), in_q);
        let mut rng = class_rng(seed, class);

        let device_complete = rows.iter().all(|r| r.device_id.is_some());
        let (test_rows, q_rows, p_rows) = if device_complete {
            split_by_device(rows, qn, tn, in_q, &mut rng)
        } else {
            if rows.iter().any(|r| r.device_id.is_some()) && !warned_fallback {
                log::warn!(
                    "class {class}: partial device metadata; falling back to image-level splits"
                );
                warned_fallback = true;
            } else if !warned_fallback {
                log::warn!(
                    "no device metadata; splits are image-disjoint but not device-disjoint"
                );
                warned_fallback = true;
            }
            rows.shuffle(&mut rng);
            let test_rows: Vec<_> = rows.drain(..tn.min(rows.len())).collect();
            let q_rows: Vec<_> = rows.drain(..qn.min(rows.len())).collect();
            (test_rows, q_rows, rows)
        };

        if test_rows.is_empty() {
            return Err(CoreError::EmptyClass {
                label: class,
                split: "p_test".into(),
            });
        }
        if p_rows.is_empty() {
            return Err(CoreError::EmptyClass {
                label: class,
                split: "p_data".into(),
            });
        }
        if in_q && q_rows.is_empty() {
            return Err(CoreError::EmptyClass {
                label: class,
                split: "q_data".into(),
            });
        }
        plan.p_test.extend(test_rows);
        plan.q_data.extend(q_rows);
        plan.p_data.extend(p_rows);
    }
    Ok(plan)
}

/// Assigns whole devices to splits, greedily filling p_test then q_data.
fn split_by_device(
    rows: Vec<ManifestRow>,
    qn: usize,
    tn: usize,
    in_q: bool,
    rng: &mut ChaCha8Rng,
) -> (Vec<ManifestRow>, Vec<ManifestRow>, Vec<ManifestRow>) {
    let mut by_device: BTreeMap<String, Vec<ManifestRow>> = BTreeMap::new();
    for r in rows {
        by_device
            .entry(r.device_id.clone().unwrap_or_default())
            .or_default()
            .push(r);
    }
    let mut devices: Vec<String> = by_device.keys().cloned().collect();
    devices.shuffle(rng);
    let mut test = Vec::new();
    let mut q = Vec::new();
    let mut p = Vec::new();
    let n_dev = devices.len();
    for (i, d) in devices.into_iter().enumerate() {
        let imgs = by_device.remove(&d).unwrap();
        let remaining = n_dev - i;
        // Never starve p_data (and q_data) of their last possible device.
        let reserve = 1 + usize::from(in_q && q.is_empty());
        if test.len() < tn && remaining > reserve {
            test.extend(imgs);
        } else if in_q && q.len() < qn && remaining > 1 {
            q.extend(imgs);
        } else {
            p.extend(imgs);
        }
    }
    (test, q, p)
}

/// Spatial one-hot condition: plane `target-1` is all ones (labels are
/// 1-based), the rest are zero. Shape `(c', H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionPlane {
    pub planes: Array3<f64>,
    pub target: u32,
}

pub fn encode_condition(y_prime: u32, c_prime: usize, h: usize, w: usize) -> Result<ConditionPlane> {
    if y_prime == 0 || y_prime as usize > c_prime {
        return Err(CoreError::LabelOutOfRange {
            label: y_prime,
            max: c_prime as u32,
        });
    }
    let mut planes = Array3::<f64>::zeros((c_prime, h, w));
    planes
        .index_axis_mut(ndarray::Axis(0), y_prime as usize - 1)
        .fill(1.0);
    Ok(ConditionPlane {
        planes,
        target: y_prime,
    })
}

/// In-memory pool of labeled training patches.
#[derive(Debug, Clone)]
pub struct PatchStore {
    pub patches: Vec<Patch>,
    pub classes: Vec<u32>,
    pub patch_size: usize,
}

impl PatchStore {
    /// Loads every image of `rows` (resolved against `root`) and tiles it
    /// into `patch_size` patches. All images must be labeled.
    pub fn load(rows: &[ManifestRow], root: &Path, patch_size: usize) -> Result<PatchStore> {
        let mut patches = Vec::new();
        let mut classes: Vec<u32> = Vec::new();
        for row in rows {
            let path = root.join(&row.path);
            let img = Image::load(&path)?.with_label(row.label);
            patches.extend(extract_patches(&img, patch_size)?);
            if !classes.contains(&row.label) {
                classes.push(row.label);
            }
        }
        classes.sort_unstable();
        if patches.is_empty() {
            return Err(CoreError::InvalidParameter(
                "no patches could be extracted (images smaller than the patch size?)".into(),
            ));
        }
        Ok(PatchStore {
            patches,
            classes,
            patch_size,
        })
    }

    pub fn from_patches(patches: Vec<Patch>, patch_size: usize) -> Result<PatchStore> {
        let mut classes: Vec<u32> = Vec::new();
        for p in &patches {
            let l = p.label.ok_or_else(|| {
                CoreError::InvalidParameter("training patches must be labeled".into())
            })?;
            if !classes.contains(&l) {
                classes.push(l);
            }
        }
        if patches.is_empty() {
            return Err(CoreError::InvalidParameter("empty patch store".into()));
        }
        classes.sort_unstable();
        Ok(PatchStore {
            patches,
            classes,
            patch_size,
        })
    }
}

/// Draws `(x, y, y')`: a Dih4-augmented patch, its true label, and an
/// independent uniform target label from `q_classes`. `y' == y` is allowed
/// here; callers needing `y' != y` (the anonymization pass) resample.
pub fn sample_training_tuple<R: Rng>(
    store: &PatchStore,
    q_classes: &[u32],
    rng: &mut R,
) -> Result<(Patch, u32, u32)> {
    if store.patches.is_empty() || q_classes.is_empty() {
        return Err(CoreError::InvalidParameter(
            "sampling needs a non-empty store and class set".into(),
        ));
    }
    let idx = rng.gen_range(0..store.patches.len());
    let k = rng.gen_range(0..8u8);
    let patch = store.patches[idx].dih4(k)?;
    let y = patch.label.ok_or_else(|| {
        CoreError::InvalidParameter("sampled patch has no label".into())
    })?;
    let y_prime = q_classes[rng.gen_range(0..q_classes.len())];
    Ok((patch, y, y_prime))
}

/// Seeded per-epoch shuffle of `0..n`, for reproducible batch assembly.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = class_rng(seed, epoch as u32 ^ 0x5EED);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// The standard 12-model Dresden benchmark itemization:
/// `(label, camera model, q_data, p_data, p_test)` image counts. The first
/// six classes form the attacker-known subset.
pub const DRESDEN_SPLIT: [(u32, &str, usize, usize, usize); 12] = [
    (1, "Kodak M1063", 760, 765, 100),
    (2, "Casio EX-Z150", 324, 335, 100),
    (3, "Nikon CoolPixS710", 352, 330, 100),
    (4, "Praktica DCZ5.9", 345, 358, 100),
    (5, "Olympus mju-1050SW", 374, 379, 100),
    (6, "Ricoh GX100", 353, 296, 100),
    (7, "Rollei RCP-7325XS", 0, 339, 100),
    (8, "Panasonic DMC-FZ50", 0, 677, 100),
    (9, "Samsung NV15", 0, 396, 100),
    (10, "Samsung L74wide", 0, 432, 100),
    (11, "Fujifilm FinePixJ50", 0, 397, 100),
    (12, "Canon Ixus70", 0, 333, 100),
];

/// Class sets and per-class counts reproducing [`DRESDEN_SPLIT`].
pub fn dresden_policy() -> (Vec<u32>, Vec<u32>, SplitPolicy) {
    let q_classes: Vec<u32> = DRESDEN_SPLIT
        .iter()
        .filter(|r| r.2 > 0)
        .map(|r| r.0)
        .collect();
    let p_classes: Vec<u32> = DRESDEN_SPLIT.iter().map(|r| r.0).collect();
    let q = DRESDEN_SPLIT.iter().map(|r| (r.0, r.2)).collect();
    let test = DRESDEN_SPLIT.iter().map(|r| (r.0, r.4)).collect();
    (q_classes, p_classes, SplitPolicy::PerClassCounts { q, test })
}
