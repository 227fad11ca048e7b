use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub model_dim: usize,
    pub layers_encoder: usize,
    pub layers_decoder: usize,
    pub character_encoder_layers: usize,
    pub attention_heads: usize,
    pub feedforward_dim: usize,
    pub max_sequence_length: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0, // set from the corpus vocabulary
            model_dim: 64,
            layers_encoder: 2,
            layers_decoder: 2,
            character_encoder_layers: 1,
            attention_heads: 4,
            feedforward_dim: 256,
            max_sequence_length: 512,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(ModelError::Config(msg.to_string()));
        if self.vocab_size == 0
            || self.model_dim == 0
            || self.layers_encoder == 0
            || self.layers_decoder == 0
            || self.character_encoder_layers == 0
            || self.attention_heads == 0
            || self.feedforward_dim == 0
            || self.max_sequence_length == 0
        {
            return fail("all dimensions must be positive");
        }
        if self.model_dim % self.attention_heads != 0 {
            return fail("model_dim must be divisible by attention_heads");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must be in [0, 1)");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.attention_heads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn valid() -> ModelConfig {
        ModelConfig { vocab_size: 100, ..Default::default() }
    }

    #[test]
    fn default_desk_scale_is_valid_once_vocab_is_set() {
        assert!(valid().validate().is_ok());
        assert_eq!(valid().head_dim(), 16);
    }

    #[test]
    fn rejects_indivisible_heads() {
        let cfg = ModelConfig { attention_heads: 5, ..valid() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_zero_dims_and_bad_dropout() {
        assert!(ModelConfig { vocab_size: 0, ..valid() }.validate().is_err());
        assert!(ModelConfig { dropout: 1.0, ..valid() }.validate().is_err());
    }
}
