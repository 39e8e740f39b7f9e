//! Autoregressive sampling with optional logit constraints.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::transformer::Model;
use crate::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Zero or below means greedy decoding.
    pub temperature: f64,
    /// Zero keeps the full distribution.
    pub top_k: usize,
    pub max_tokens: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { temperature: 1.0, top_k: 0, max_tokens: 256 }
    }
}

/// Restricts which tokens may be emitted next.
pub trait TokenConstraint {
    fn allowed(&self, token: u32) -> bool;
    fn advance(&mut self, token: u32);
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    /// Tokens emitted after the prefix.
    pub ids: Vec<u32>,
    /// The stop token was emitted (and is the last id).
    pub stopped: bool,
    /// Generation ran out of context before stopping.
    pub truncated: bool,
    /// The constraint left no legal token.
    pub dead_end: bool,
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax<F: Scalar>(logits: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Draws a token from `logits` at `temperature`, restricted to the `top_k`
/// largest when `top_k > 0`. Masked entries must be negative infinity.
pub fn sample_logits<F: Scalar, R: Rng>(logits: &[F], temperature: f64, top_k: usize, rng: &mut R) -> usize {
    if temperature <= 0.0 {
        return argmax(logits);
    }
    let vals: Vec<f64> = logits.iter().map(|v| v.to_f64().unwrap_or(f64::NEG_INFINITY)).collect();
    let mut order: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > f64::NEG_INFINITY).collect();
    if top_k > 0 && top_k < order.len() {
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
        order.truncate(top_k);
        order.sort_unstable();
    }
    let max = order.iter().map(|&i| vals[i]).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = order.iter().map(|&i| ((vals[i] - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (&i, &w) in order.iter().zip(&weights) {
        if u < w {
            return i;
        }
        u -= w;
    }
    *order.last().expect("at least one candidate")
}

/// Extends `prefix` until `stop_id`, `max_tokens`, or the context limit.
pub fn generate<F: Scalar, R: Rng>(
    model: &Model<F>,
    prefix: &[u32],
    stop_id: u32,
    cfg: &SamplingConfig,
    rng: &mut R,
    mut constraint: Option<&mut dyn TokenConstraint>,
) -> Result<Generation, ModelError> {
    if prefix.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let ctx = model.config.context_length;
    if prefix.len() > ctx {
        return Err(ModelError::ContextOverflow { len: prefix.len(), max: ctx });
    }
    let mut session = model.session();
    let mut logits = Vec::new();
    for &t in prefix {
        logits = session.push(t)?;
    }
    let mut out = Generation { ids: Vec::new(), stopped: false, truncated: false, dead_end: false };
    while out.ids.len() < cfg.max_tokens {
        if let Some(c) = constraint.as_deref() {
            for (i, l) in logits.iter_mut().enumerate() {
                if !c.allowed(i as u32) {
                    *l = F::neg_infinity();
                }
            }
            if logits.iter().all(|l| *l == F::neg_infinity()) {
                out.dead_end = true;
                break;
            }
        }
        let next = sample_logits(&logits, cfg.temperature, cfg.top_k, rng) as u32;
        out.ids.push(next);
        if let Some(c) = constraint.as_deref_mut() {
            c.advance(next);
        }
        if next == stop_id {
            out.stopped = true;
            break;
        }
        if session.len() >= ctx {
            out.truncated = true;
            break;
        }
        logits = session.push(next)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_and_ties() {
        let l = [0.1f32, 0.9, 0.9, -1.0];
        assert_eq!(argmax(&l), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_logits(&l, 0.0, 0, &mut rng), 1);
    }

    #[test]
    fn top_k_restricts_support() {
        let l = [3.0f64, 2.0, 1.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            assert!(sample_logits(&l, 5.0, 2, &mut rng) < 2);
        }
    }

    #[test]
    fn sampling_frequencies_follow_softmax() {
        let l = [0.0f64, (3.0f64).ln()];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20_000;
        let ones = (0..n).filter(|_| sample_logits(&l, 1.0, 0, &mut rng) == 1).count();
        assert!((ones as f64 / n as f64 - 0.75).abs() < 0.015);
    }

    #[test]
    fn masked_entries_never_drawn() {
        let l = [f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert_eq!(sample_logits(&l, 1.0, 0, &mut rng), 1);
        }
    }
}
