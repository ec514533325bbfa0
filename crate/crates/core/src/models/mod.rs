//! Convolutional encoder/decoder pair, the WAE and β-VAE objectives, training
//! and checkpoints.

mod arch;
mod checkpoint;
mod loss;
mod mmd;
mod network;
mod train;

pub use arch::{ArchConfig, ModelKind, ParamSpec};
pub use checkpoint::{load_model, save_model, Checkpoint, SplitRecord, TensorEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{
    draw_noise, kl_standard_normal, loss_and_gradients, loss_with_noise, vae_loss, wae_loss, LossParts, Objective,
};
pub use mmd::{imq_scales, mmd_imq, mmd_on_tape, DEFAULT_IMQ_MULTIPLIERS};
pub use network::{ModelParams, Mode};
pub use train::{split_indices, train, EpochRecord, Split, TrainConfig, TrainHistory, TrainOutcome};

use thiserror::Error;

use crate::diffcore::DiffError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model kind mismatch: {0}")]
    KindMismatch(String),
    #[error("not enough data: {0}")]
    Insufficient(String),
    #[error("training diverged at epoch {epoch}, step {step}")]
    Divergence { epoch: usize, step: usize },
    #[error("checkpoint version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
}
