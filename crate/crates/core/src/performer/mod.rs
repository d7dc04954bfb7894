//! Decoder-only transformer over compound-word records: training, sampling
//! and checkpoints.

mod checkpoint;
mod config;
mod generate;
mod loss;
mod model;
mod optim;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};
pub use config::{ModelConfig, SamplingConfig, TrainConfig};
pub use generate::{sample_masked, Generation};
pub use loss::{count_targets, targets_for, uniform_loss, HeadTargets, LossBreakdown};
pub use model::Performer;
pub use optim::{global_norm, learning_rate, AdamW};
pub use params::{LayerParams, Params};
pub use train::{metrics_header, StepRecord, Trainer};

use thiserror::Error;

use crate::tokenizer::{Field, TokenError};

/// Family head plus one head per field.
pub const NUM_HEADS: usize = 1 + crate::tokenizer::NUM_FIELDS;

/// Output size of every head, family head first.
pub fn head_sizes() -> [usize; NUM_HEADS] {
    let mut s = [4; NUM_HEADS];
    for f in Field::ALL {
        s[f.index() + 1] = f.size();
    }
    s
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence of {len} records exceeds max_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("dataset has no windows")]
    EmptyDataset,
    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: u64, detail: String },
    #[error("bar {bar}: prompt needs {needed} positions but max_len is {max_len}")]
    ContextOverflow { bar: usize, needed: usize, max_len: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
