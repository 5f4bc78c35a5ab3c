//! The multi-scale enhancement network, its training loops and checkpoints.

mod config;
mod model;
mod train;

pub use config::{LossWeights, MaskedConfig, NetworkConfig, RunConfig, TrainConfig, SCALES};
pub use model::{Model, SIZE_MULTIPLE};
pub use train::{masked_finetune, soft_mask_weights, train, train_step, Objective, StepStats, TrainLog, TrainState};
