//! Next-location accuracy: for every stop after the first, decode the next
//! word greedily from the true history up to its separator and compare the
//! cell.

use trajlang_core::codec::{LevelAlphabet, SEPARATOR};
use trajlang_core::corpus::TrajectoryLine;
use trajlang_core::tokenizer::BpeVocab;
use trajlang_model::generate::argmax;
use trajlang_model::{BodyState, LineGrammar, Model, Scalar, TokenConstraint};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

/// Lines longer than the context are skipped.
pub fn next_location_accuracy<F: Scalar>(
    model: &Model<F>,
    vocab: &BpeVocab,
    alphabet: &LevelAlphabet,
    lines: &[TrajectoryLine],
) -> Result<Accuracy, CliError> {
    let grammar = LineGrammar::new(vocab);
    let sep = vocab.id_of(&SEPARATOR.to_string()).ok_or_else(|| CliError::data("vocabulary lacks the separator"))?;
    let ctx = model.config.context_length;
    let mut acc = Accuracy::default();
    for line in lines {
        let ids = vocab.tokenize(&line.to_text(alphabet)?)?;
        if ids.len() > ctx {
            continue;
        }
        let mut session = model.session();
        let mut k = 0;
        for &t in &ids {
            let logits = session.push(t)?;
            if t != sep {
                continue;
            }
            k += 1;
            let Some(stop) = line.stops.get(k) else { break };
            let word = greedy_word(&session, logits, &grammar, vocab, ctx)?;
            acc.total += 1;
            // The word is the interval character followed by the cell.
            if word.chars().skip(1).eq(stop.cell.as_str().chars()) {
                acc.correct += 1;
            }
        }
    }
    Ok(acc)
}

/// Greedy, grammar-constrained decoding of one interval-plus-cell word.
fn greedy_word<F: Scalar>(
    session: &trajlang_model::Session<'_, F>,
    mut logits: Vec<F>,
    grammar: &LineGrammar,
    vocab: &BpeVocab,
    ctx: usize,
) -> Result<String, CliError> {
    let mut s = session.clone();
    let mut con = grammar.constraint(BodyState::AfterSeparator);
    let mut out = String::new();
    loop {
        for (i, l) in logits.iter_mut().enumerate() {
            if !con.allowed(i as u32) {
                *l = F::neg_infinity();
            }
        }
        if logits.iter().all(|l| *l == F::neg_infinity()) {
            return Ok(out);
        }
        let t = argmax(&logits) as u32;
        con.advance(t);
        out.push_str(vocab.surface(t)?);
        if con.state() == BodyState::Cell(5) || s.len() >= ctx {
            return Ok(out);
        }
        logits = s.push(t)?;
    }
}
