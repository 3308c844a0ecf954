use serde::{Deserialize, Serialize};

use crate::error::{EngageError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub leaky_relu_slope: f64,
    /// Embedding dim per categorical slot is min(this, vocab size).
    pub max_embed_dim: usize,
    /// Language vocabulary size for the language embedding slot.
    pub languages: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub seed: u64,
    /// Ablation switch: zero the sketch block at the model input.
    pub zero_sketch: bool,
    /// Optional log1p of numeric scalars before Fourier encoding; off by
    /// default since the encoding itself replaces normalization.
    pub pre_log: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_width: 1500,
            hidden_layers: 3,
            leaky_relu_slope: 0.01,
            max_embed_dim: 16,
            languages: 66,
            batch_size: 256,
            lr: 1e-4,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            epochs_stage1: 2,
            epochs_stage2: 3,
            seed: 0,
            zero_sketch: false,
            pre_log: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.hidden_layers == 0 {
            return Err(EngageError::Config("model widths must be positive".into()));
        }
        if !(0.0 < self.leaky_relu_slope && self.leaky_relu_slope < 1.0) {
            return Err(EngageError::Config("leaky relu slope must be in (0,1)".into()));
        }
        for b in [self.adam_beta1, self.adam_beta2] {
            if !(0.0 < b && b < 1.0) {
                return Err(EngageError::Config("adam betas must be in (0,1)".into()));
            }
        }
        if self.batch_size == 0 {
            return Err(EngageError::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}
