//! Imaging primitives, forensic preprocessors, a synthetic camera simulator,
//! and dataset splitting for camera-model anonymization experiments.

pub mod cfa;
pub mod dataset;
pub mod dihedral;
pub mod error;
pub mod image;
pub mod metrics;
pub mod patches;
pub mod preprocess;
pub mod synthcam;

pub use cfa::{CfaPattern, demosaic_bilinear, demosaic_bilinear_array, mosaic, remosaic};
pub use dataset::{
    ConditionPlane, Manifest, ManifestRow, PatchStore, SplitPlan, SplitPolicy, build_splits,
    encode_condition, epoch_order, sample_training_tuple,
};
pub use dihedral::{DIH4_COMPOSE, dih4_apply, dih4_apply_array, dih4_inverse};
pub use error::{CoreError, Result};
pub use image::Image;
pub use metrics::{amplified_delta, mean_psnr_capped, psnr};
pub use patches::{PATCH_SIZE, Patch, extract_patches};
pub use preprocess::{
    FrequencyPair, PreprocessorKind, WW_SIGMA0, apply_preprocessor, fd_residual,
    frequency_split, hp_residual, ww_residual,
};
pub use synthcam::{CameraModelSpec, DemosaicVariant, Scene, make_dataset, render};
