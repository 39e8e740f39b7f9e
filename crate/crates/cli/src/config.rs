//! Run configuration: one TOML file with a section per pipeline stage.

use std::path::Path;

use serde::{Deserialize, Serialize};
use trajlang_core::baselines::{NoiseModel, MARKOV_STEPS, MARKOV_STEP_MINUTES};
use trajlang_core::corpus::{BuildOptions, PRIVACY_RADIUS_M};
use trajlang_core::synthgen::WorldConfig;
use trajlang_core::tokenizer::DEFAULT_VOCAB_SIZE;
use trajlang_model::{ModelConfig, SamplingConfig, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Every stochastic stage derives its generator from this seed.
    pub seed: u64,
    pub synth: SynthSection,
    pub corpus: CorpusSection,
    pub bpe: BpeSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub sampling: SamplingSection,
    pub markov: MarkovSection,
    pub ar: ArSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_agents: usize,
    pub n_days: usize,
    pub world: WorldConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub min_gap_minutes: u32,
    pub privacy_radius_m: f64,
    /// One device in `split_ratio + 1` goes to the test split.
    pub split_ratio: u32,
    pub conditioned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpeSection {
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub context_length: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Train on lines with their conditioning prefix; `false` strips it.
    pub conditioned: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub min_lr_fraction: f64,
    pub grad_clip: f64,
    /// Steps between rows of the training log.
    pub log_every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub temperature: f64,
    pub top_k: usize,
    pub max_tokens: usize,
    pub samples_per_line: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkovSection {
    pub step_minutes: u32,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    Bootstrap,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArSection {
    /// Lag order; 0 selects it by AIC up to `max_order`.
    pub order: usize,
    pub max_order: usize,
    pub noise: Noise,
}

/// How the true clock is read after the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthClock {
    /// Exact arrival minutes.
    Exact,
    /// Arrival minutes rebuilt from interval bins, as for generated lines.
    Representative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub truth_clock: TruthClock,
    pub distance_grid_points: usize,
    pub max_interval_minutes: u32,
    /// Test lines used for attention profiles.
    pub attention_lines: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            synth: SynthSection::default(),
            corpus: CorpusSection::default(),
            bpe: BpeSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            sampling: SamplingSection::default(),
            markov: MarkovSection::default(),
            ar: ArSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { n_agents: 100, n_days: 7, world: WorldConfig::default() }
    }
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self { min_gap_minutes: 10, privacy_radius_m: PRIVACY_RADIUS_M, split_ratio: 4, conditioned: true }
    }
}

impl Default for BpeSection {
    fn default() -> Self {
        Self { vocab_size: DEFAULT_VOCAB_SIZE }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { n_layers: 4, n_heads: 4, d_model: 128, d_ff: 512, context_length: 128, dropout: 0.0 }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            conditioned: true,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            warmup_steps: t.warmup_steps,
            total_steps: t.total_steps,
            min_lr_fraction: t.min_lr_fraction,
            grad_clip: t.grad_clip,
            log_every: 50,
        }
    }
}

impl Default for SamplingSection {
    fn default() -> Self {
        let s = SamplingConfig::default();
        Self { temperature: s.temperature, top_k: s.top_k, max_tokens: s.max_tokens, samples_per_line: 1 }
    }
}

impl Default for MarkovSection {
    fn default() -> Self {
        Self { step_minutes: MARKOV_STEP_MINUTES, steps: MARKOV_STEPS }
    }
}

impl Default for ArSection {
    fn default() -> Self {
        Self { order: 3, max_order: 10, noise: Noise::Bootstrap }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            truth_clock: TruthClock::Representative,
            distance_grid_points: 60,
            max_interval_minutes: 1440,
            attention_lines: 500,
        }
    }
}

impl RunConfig {
    /// Small preset for the end-to-end smoke run: 100 agents for a week and a
    /// two-layer model trained for 300 steps.
    pub fn smoke() -> Self {
        let mut c = Self::default();
        c.bpe.vocab_size = 1024;
        c.model = ModelSection { n_layers: 2, n_heads: 2, d_model: 32, d_ff: 128, context_length: 96, dropout: 0.0 };
        c.train.learning_rate = 3e-3;
        c.train.batch_size = 16;
        c.train.warmup_steps = 30;
        c.train.total_steps = 300;
        c.eval.attention_lines = 100;
        c
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.synth.world.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.model_config(64).validate().map_err(|e| CliError::config(e.to_string()))?;
        self.train_config().validate().map_err(|e| CliError::config(e.to_string()))?;
        if self.corpus.split_ratio == 0 {
            return Err(CliError::config("corpus.split_ratio must be positive"));
        }
        if self.bpe.vocab_size == 0 || self.sampling.samples_per_line == 0 || self.train.log_every == 0 {
            return Err(CliError::config("vocab size, samples per line and log interval must be positive"));
        }
        if self.markov.step_minutes == 0 || self.markov.steps == 0 {
            return Err(CliError::config("markov step and step count must be positive"));
        }
        if self.ar.order > self.ar.max_order || !(1..=trajlang_core::baselines::MAX_ORDER).contains(&self.ar.max_order) {
            return Err(CliError::config("ar.order must not exceed ar.max_order, which must be within 1..=10"));
        }
        if self.eval.distance_grid_points < 2 || self.eval.max_interval_minutes == 0 {
            return Err(CliError::config("eval grids need at least two distance points and a positive interval range"));
        }
        Ok(())
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            min_gap: self.corpus.min_gap_minutes,
            privacy_radius_m: self.corpus.privacy_radius_m,
            split_ratio: self.corpus.split_ratio,
            seed: self.seed,
            conditioned: self.corpus.conditioned,
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            n_layers: m.n_layers,
            n_heads: m.n_heads,
            d_model: m.d_model,
            d_ff: m.d_ff,
            context_length: m.context_length,
            vocab_size,
            dropout: m.dropout,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            warmup_steps: t.warmup_steps,
            total_steps: t.total_steps,
            min_lr_fraction: t.min_lr_fraction,
            grad_clip: t.grad_clip,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    pub fn sampling_config(&self) -> SamplingConfig {
        let s = &self.sampling;
        SamplingConfig { temperature: s.temperature, top_k: s.top_k, max_tokens: s.max_tokens }
    }

    pub fn noise_model(&self) -> NoiseModel {
        match self.ar.noise {
            Noise::Bootstrap => NoiseModel::Bootstrap,
            Noise::Gaussian => NoiseModel::Gaussian,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        for c in [RunConfig::default(), RunConfig::smoke()] {
            let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
            assert_eq!(back, c);
            c.validate().unwrap();
        }
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c: RunConfig = toml::from_str("seed = 9\n[train]\ntotal_steps = 5\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.train.total_steps, 5);
        assert_eq!(c.model, ModelSection::default());
        assert_eq!(c.train_config().seed, 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[train]\nsteps = 5\n").is_err());
        let mut c = RunConfig::default();
        c.ar.order = 11;
        assert!(c.validate().is_err());
    }
}
