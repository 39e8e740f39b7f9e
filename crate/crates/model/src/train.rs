//! Adam with warmup and cosine decay, gradient clipping and epoch batching.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::transformer::Model;
use crate::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub warmup_steps: u64,
    pub total_steps: u64,
    /// Floor of the cosine decay as a fraction of the peak rate.
    pub min_lr_fraction: f64,
    pub grad_clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_size: 64,
            warmup_steps: 100,
            total_steps: 2000,
            min_lr_fraction: 0.0,
            grad_clip: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.total_steps == 0 {
            return bad("learning rate, batch size and step count must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("Adam moments need betas in [0, 1) and positive eps");
        }
        if !(self.grad_clip > 0.0) || !(0.0..=1.0).contains(&self.min_lr_fraction) {
            return bad("clip must be positive and the decay floor within [0, 1]");
        }
        Ok(())
    }

    /// Rate for 0-based `step`: linear warmup to the peak, then cosine decay
    /// to the floor at `total_steps`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let peak = self.learning_rate;
        if step < self.warmup_steps {
            return peak * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        let floor = peak * self.min_lr_fraction;
        floor + (peak - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<F>,
    pub v: Vec<F>,
    /// Number of updates applied.
    pub step: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(n: usize) -> Self {
        Self { m: vec![F::zero(); n], v: vec![F::zero(); n], step: 0 }
    }
}

/// Deterministic epoch-wise shuffling: epoch `e` uses a permutation seeded by
/// `(seed, e)`, so the position alone reproduces the order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchCursor {
    pub seed: u64,
    pub epoch: u64,
    pub offset: u64,
}

impl BatchCursor {
    pub fn new(seed: u64) -> Self {
        Self { seed, epoch: 0, offset: 0 }
    }

    fn permutation(&self, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.epoch);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx
    }

    /// Indices of the next batch, wrapping into a new epoch as needed.
    pub fn next_batch(&mut self, n: usize, batch_size: usize) -> Vec<usize> {
        assert!(n > 0, "empty training set");
        let mut out = Vec::with_capacity(batch_size);
        let mut perm = self.permutation(n);
        while out.len() < batch_size {
            if self.offset as usize >= n {
                self.epoch += 1;
                self.offset = 0;
                perm = self.permutation(n);
            }
            out.push(perm[self.offset as usize]);
            self.offset += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub lr: f64,
}

/// Model, optimizer state and data position for a training run.
#[derive(Debug, Clone)]
pub struct Trainer<F: Scalar> {
    pub model: Model<F>,
    pub config: TrainConfig,
    pub adam: AdamState<F>,
    pub cursor: BatchCursor,
    pub dropout_rng: ChaCha8Rng,
    grad: Vec<F>,
}

impl<F: Scalar> Trainer<F> {
    pub fn new(model: Model<F>, config: TrainConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let n = model.n_params();
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
        dropout_rng.set_stream(1);
        Ok(Self { adam: AdamState::new(n), cursor: BatchCursor::new(config.seed), dropout_rng, config, model, grad: vec![F::zero(); n] })
    }

    /// Restores a run from saved optimizer state and position.
    pub fn resume(
        model: Model<F>,
        config: TrainConfig,
        adam: AdamState<F>,
        cursor: BatchCursor,
        dropout_rng: ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let n = model.n_params();
        if adam.m.len() != n || adam.v.len() != n {
            return Err(ModelError::Format("optimizer state does not match the model".into()));
        }
        Ok(Self { model, config, adam, cursor, dropout_rng, grad: vec![F::zero(); n] })
    }

    pub fn step_count(&self) -> u64 {
        self.adam.step
    }

    /// One update on an explicit batch.
    pub fn step(&mut self, batch: &[Vec<u32>]) -> Result<StepStats, ModelError> {
        self.grad.iter_mut().for_each(|g| *g = F::zero());
        let rng = (self.model.config.dropout > 0.0).then_some(&mut self.dropout_rng);
        let loss = self.model.loss_and_grad(batch, &mut self.grad, rng)?;
        let norm = self.grad.iter().map(|g| g.to_f64().unwrap_or(f64::NAN).powi(2)).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(ModelError::NonFiniteLoss(norm));
        }
        if norm > self.config.grad_clip {
            let s = F::lit(self.config.grad_clip / norm);
            self.grad.iter_mut().for_each(|g| *g *= s);
        }
        let step = self.adam.step;
        let lr = self.config.lr_at(step);
        let t = (step + 1) as i32;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let c1 = F::lit(1.0 / (1.0 - b1.powi(t)));
        let c2 = F::lit(1.0 / (1.0 - b2.powi(t)));
        let (fb1, fb2, eps, flr) = (F::lit(b1), F::lit(b2), F::lit(self.config.eps), F::lit(lr));
        let (one_b1, one_b2) = (F::one() - fb1, F::one() - fb2);
        for (((p, g), m), v) in self.model.params.iter_mut().zip(&self.grad).zip(&mut self.adam.m).zip(&mut self.adam.v) {
            *m = fb1 * *m + one_b1 * *g;
            *v = fb2 * *v + one_b2 * *g * *g;
            let mhat = *m * c1;
            let vhat = *v * c2;
            *p -= flr * mhat / (vhat.sqrt() + eps);
        }
        self.adam.step += 1;
        Ok(StepStats { step, loss, grad_norm: norm, lr })
    }

    /// One update on the next batch of `data`.
    pub fn step_on(&mut self, data: &[Vec<u32>]) -> Result<StepStats, ModelError> {
        let idx = self.cursor.next_batch(data.len(), self.config.batch_size);
        let batch: Vec<Vec<u32>> = idx.into_iter().map(|i| data[i].clone()).collect();
        self.step(&batch)
    }

    /// Runs until `total_steps`, reporting every step to `on_step`.
    pub fn run(&mut self, data: &[Vec<u32>], mut on_step: impl FnMut(&StepStats)) -> Result<(), ModelError> {
        while self.adam.step < self.config.total_steps {
            let s = self.step_on(data)?;
            on_step(&s);
        }
        Ok(())
    }
}
