//! The spatial CNN, the parallel CNN-RNN, their training loop and the
//! convolutional feature extractor used by the boosted hybrid.

mod config;
mod head;
mod hybrid;
mod model;
mod train;

pub use config::{ArchConfig, CnnHeadConfig, ModelKind, NetShape};
pub use head::CnnHead;
pub use hybrid::{extract_conv_features, hybrid_features, hybrid_fit};
pub use model::{ModelSpecRecord, NetInputs, NeuralModel};
pub use train::{evaluate_mse, train, EpochRecord, History, TrainingConfig};
