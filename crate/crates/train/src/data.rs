//! Batch assembly: patches to NCHW tensors, label indexing, and
//! preprocessor application.

use cama_core::{Image, Patch, PatchStore, PreprocessorKind, apply_preprocessor};
use ndarray::{Array3, Array4, Axis, s};

use crate::error::{Result, TrainError};

/// Maps raw (1-based, possibly sparse) class labels to dense 0-based
/// indices, in ascending label order.
#[derive(Debug, Clone)]
pub struct ClassIndex {
    labels: Vec<u32>,
}

impl ClassIndex {
    pub fn new(labels: &[u32]) -> ClassIndex {
        let mut labels = labels.to_vec();
        labels.sort_unstable();
        labels.dedup();
        ClassIndex { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn index_of(&self, label: u32) -> Result<usize> {
        self.labels
            .binary_search(&label)
            .map_err(|_| TrainError::Config(format!("label {label} not in class set")))
    }

    pub fn label_at(&self, idx: usize) -> u32 {
        self.labels[idx]
    }
}

/// HWC (H, W, C) plane stack to CHW.
pub fn hwc_to_chw(a: &Array3<f64>) -> Array3<f64> {
    a.view().permuted_axes([2, 0, 1]).as_standard_layout().to_owned()
}

/// CHW back to HWC (for writing tensors out as images).
pub fn chw_to_hwc(a: &Array3<f64>) -> Array3<f64> {
    a.view().permuted_axes([1, 2, 0]).as_standard_layout().to_owned()
}

/// Stacks same-shaped CHW arrays into an NCHW batch.
pub fn stack_chw(items: &[Array3<f64>]) -> Array4<f64> {
    assert!(!items.is_empty(), "empty batch");
    let views: Vec<_> = items.iter().map(|a| a.view().insert_axis(Axis(0))).collect();
    ndarray::concatenate(Axis(0), &views)
        .expect("uniform shapes")
        .as_standard_layout()
        .to_owned()
}

/// Extracts sample `i` of an NCHW batch as a CHW array.
pub fn batch_item(batch: &Array4<f64>, i: usize) -> Array3<f64> {
    batch.slice(s![i, .., .., ..]).as_standard_layout().to_owned()
}

pub fn patch_chw(patch: &Patch) -> Array3<f64> {
    hwc_to_chw(&patch.pixels)
}

/// Builds a classification batch from store patches at `indices`, returning
/// the tensor and dense label indices.
pub fn store_batch(
    store: &PatchStore,
    indices: &[usize],
    index: &ClassIndex,
) -> Result<(Array4<f64>, Vec<usize>)> {
    let mut planes = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let patch = &store.patches[i];
        planes.push(patch_chw(patch));
        let raw = patch
            .label
            .ok_or_else(|| TrainError::Config("unlabeled patch in training store".into()))?;
        labels.push(index.index_of(raw)?);
    }
    Ok((stack_chw(&planes), labels))
}

/// Applies `kind` to a patch (as an image) and returns CHW planes with
/// `kind.channels()` channels.
pub fn preprocessed_chw(patch: &Patch, kind: PreprocessorKind) -> Result<Array3<f64>> {
    let img = patch.to_image()?;
    let planes = apply_preprocessor(kind, &img)?;
    Ok(hwc_to_chw(&planes))
}

/// Classification batch with a preprocessor applied per patch, optionally
/// after a dihedral augmentation chosen by the caller.
pub fn preprocessed_batch(
    store: &PatchStore,
    indices: &[usize],
    augments: Option<&[u8]>,
    kind: PreprocessorKind,
    index: &ClassIndex,
) -> Result<(Array4<f64>, Vec<usize>)> {
    let mut planes = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for (pos, &i) in indices.iter().enumerate() {
        let patch = match augments {
            Some(ks) => store.patches[i].dih4(ks[pos])?,
            None => store.patches[i].clone(),
        };
        planes.push(preprocessed_chw(&patch, kind)?);
        let raw = patch
            .label
            .ok_or_else(|| TrainError::Config("unlabeled patch in training store".into()))?;
        labels.push(index.index_of(raw)?);
    }
    Ok((stack_chw(&planes), labels))
}

/// Converts a CHW tensor in [0, 1] back into an image (clipping first).
pub fn chw_to_image(chw: &Array3<f64>) -> Result<Image> {
    let hwc = chw_to_hwc(chw).mapv(|v| v.clamp(0.0, 1.0));
    Ok(Image::new(hwc, None)?)
}
