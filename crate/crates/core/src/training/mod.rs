//! Optimisation, checkpoints and gradient checking.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod train;

pub use adam::{adam_step, Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{grad_check, toy_config, GradCheckReport};
pub use train::{train, train_with, EpochMetrics, TrainOutput};
