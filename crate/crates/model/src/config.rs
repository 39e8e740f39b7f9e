use serde::{Deserialize, Serialize};

use crate::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub context_length: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale default: 4 layers, 4 heads, width 128, context 512.
    pub fn desk(vocab_size: usize) -> Self {
        Self::sized(4, 4, 128, 512, vocab_size)
    }

    /// GPT-2 small shape.
    pub fn gpt2_small(vocab_size: usize) -> Self {
        Self::sized(12, 12, 768, 1024, vocab_size)
    }

    pub fn sized(n_layers: usize, n_heads: usize, d_model: usize, context_length: usize, vocab_size: usize) -> Self {
        Self { n_layers, n_heads, d_model, d_ff: 4 * d_model, context_length, vocab_size, dropout: 0.0, seed: 0 }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("layer, head and width counts must be positive");
        }
        if self.d_model % self.n_heads != 0 {
            return bad("d_model must be divisible by n_heads");
        }
        if self.context_length < 2 || self.vocab_size < 2 {
            return bad("context length and vocabulary need at least 2 entries");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    /// Checks that lines of `longest` tokens fit with one position to spare.
    pub fn check_fits(&self, longest: usize) -> Result<(), ModelError> {
        if longest + 1 > self.context_length {
            return Err(ModelError::Config(format!(
                "context length {} too short for lines of {longest} tokens",
                self.context_length
            )));
        }
        Ok(())
    }
}
