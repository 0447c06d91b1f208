//! Training loops for the anonymization pipeline: decomposition-network
//! pretraining, stream classifiers over the frozen decomposition, the
//! adversarial generator/discriminator phase, and the standalone target
//! classifiers used for scoring.

pub mod cama;
pub mod config;
pub mod data;
pub mod e0;
pub mod error;
pub mod logging;
pub mod streams;
pub mod target;

pub use cama::{CamaReport, CamaTrainer, StepStats};
pub use config::{CamaConfig, E0Config, StreamConfig, TargetConfig};
pub use data::ClassIndex;
pub use e0::{E0Report, build_e0, train_e0};
pub use error::{Result, TrainError};
pub use logging::{LossLog, LossRow, read_loss_log};
pub use streams::{StreamReport, stream_accuracy, train_streams};
pub use target::{TargetReport, classifier_accuracy, train_target};
