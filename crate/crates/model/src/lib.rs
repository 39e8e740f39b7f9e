//! Decoder-only transformer over tokenized trajectory lines: training,
//! sampling, grammar-constrained decoding, attention profiles and
//! checkpoints.

use thiserror::Error;

pub mod checkpoint;
mod config;
pub mod generate;
pub mod gradcheck;
pub mod grammar;
pub mod params;
pub mod profile;
pub mod scalar;
pub mod train;
pub mod transformer;

pub use checkpoint::Checkpoint;
pub use config::ModelConfig;
pub use generate::{generate, Generation, SamplingConfig, TokenConstraint};
pub use grammar::{BodyState, GrammarConstraint, LineGrammar};
pub use profile::{attention_profile, AttentionProfile, SourceCategory};
pub use scalar::Scalar;
pub use train::{StepStats, TrainConfig, Trainer};
pub use transformer::{Forward, Model, Session};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds context length {max}")]
    ContextOverflow { len: usize, max: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("token id {0} outside the vocabulary")]
    TokenOutOfRange(u32),
    #[error("non-finite training value {0}")]
    NonFiniteLoss(f64),
    #[error("checkpoint version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Tokenizer(#[from] trajlang_core::tokenizer::TokenizerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
