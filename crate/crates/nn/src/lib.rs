//! Neural network engine for camera-model anonymization: NCHW tensors in
//! f64, explicit forward/backward layers, GAN and classification losses,
//! optimizers, and checkpointing.
//!
//! The engine is deliberately small and deterministic: every layer caches
//! what its backward pass needs, gradients accumulate until explicitly
//! zeroed, and all randomness flows through caller-provided ChaCha8 streams.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod losses;
pub mod module;
pub mod nets;
pub mod optim;

pub use checkpoint::{
    CheckpointHeader, StateDict, StateKind, apply_state, collect_state, load_checkpoint,
    save_checkpoint,
};
pub use error::{NnError, Result};
pub use gradcheck::{GradCheckReport, gradcheck_input, gradcheck_params};
pub use layers::activation::{LeakyReLU, ReLU, Tanh01};
pub use layers::blocks::{BasicBlock, Bottleneck, DenseBlock, ResidualBlock};
pub use layers::constrained::ConstrainedConv2d;
pub use layers::conv::{Conv2d, ConvTranspose2d};
pub use layers::linear::Linear;
pub use layers::norm::{BatchNorm2d, InstanceNorm2d};
pub use layers::pool::{AvgPool2d, GlobalAvgPool, MaxPool2d};
pub use losses::{
    LAMBDA_CLF_DEFAULT, LAMBDA_PIX_DEFAULT, accuracy, adversarial_loss, argmax_rows,
    classification_loss, cross_entropy, discriminator_loss, generator_objective, pixel_loss,
    softmax,
};
pub use module::{Layer, LayerExt, Mode, Param, Stack};
pub use nets::{
    ClassifierArch, Discriminator, DualStreamEvaluator, Generator, TargetClassifier,
    build_residual_trunk, build_target_classifier, concat_channels, condition_planes,
};
pub use optim::{Adam, OptimState, Sgd, has_non_finite, max_abs_grad, param_hash};
