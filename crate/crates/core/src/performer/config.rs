use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::tokenizer::NUM_FIELDS;

/// Architecture hyperparameters. Defaults are desk scale; the reference
/// scale is available through [`ModelConfig::reference`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    /// Embedding width per token field, in field order.
    pub field_embed: [usize; NUM_FIELDS],
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            max_len: 1024,
            field_embed: [8, 8, 16, 16, 32, 32, 16, 32],
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// 8 layers, 8 heads, 512 hidden units.
    pub fn reference() -> Self {
        ModelConfig {
            d_model: 512,
            n_layers: 8,
            n_heads: 8,
            d_ff: 2048,
            max_len: 1024,
            field_embed: [32, 32, 64, 64, 256, 256, 128, 256],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.d_ff == 0 {
            return bad("dimensions must be positive");
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad("d_model must be divisible by n_heads");
        }
        if self.max_len < 2 {
            return bad("max_len must be at least 2");
        }
        if self.field_embed.contains(&0) {
            return bad("field embedding widths must be positive");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn embed_width(&self) -> usize {
        self.field_embed.iter().sum()
    }
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub warmup_steps: u64,
    pub grad_clip: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps even if epochs remain.
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-4,
            warmup_steps: 100,
            grad_clip: 1.0,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 4,
            epochs: 1,
            max_steps: None,
        }
    }
}

/// Decoding settings. A temperature of 0 selects the arg-max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
    pub max_tokens_per_bar: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            temperature: 1.0,
            top_p: 0.9,
            seed: 0,
            max_tokens_per_bar: 128,
        }
    }
}
