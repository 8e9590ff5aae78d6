//! The detector: a logistic linear head on frozen pooled embeddings.

mod adamw;
mod model;
mod train;

pub use adamw::{adamw_step, OptimizerState};
pub use model::{
    l2_normalize, sigmoid, Prediction, ProbeModel, DEFAULT_THRESHOLD, MODEL_FORMAT_VERSION,
};
pub use train::{
    bce_loss, bce_loss_and_grad, train, train_set, TrainConfig, TrainLog, TrainingSet,
};
