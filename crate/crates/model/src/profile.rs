//! Attention mass per source category while predicting locations and
//! intervals, averaged over heads and then over prediction steps.

use trajlang_core::codec::{classify, CharClass, SymbolKind, DELIMITER};
use trajlang_core::corpus::{SpecialCategory, SpecialToken};
use trajlang_core::tokenizer::BpeVocab;

use crate::scalar::Scalar;
use crate::transformer::Model;
use crate::ModelError;

pub const N_CATEGORIES: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceCategory {
    Special(SpecialCategory),
    Delimiter,
    PastLocation,
    PastInterval,
}

impl SourceCategory {
    pub fn all() -> [SourceCategory; N_CATEGORIES] {
        let mut out = [SourceCategory::Delimiter; N_CATEGORIES];
        for (o, c) in out.iter_mut().zip(SpecialCategory::ALL) {
            *o = SourceCategory::Special(c);
        }
        out[8] = SourceCategory::Delimiter;
        out[9] = SourceCategory::PastLocation;
        out[10] = SourceCategory::PastInterval;
        out
    }

    pub fn index(self) -> usize {
        match self {
            SourceCategory::Special(c) => c.index(),
            SourceCategory::Delimiter => 8,
            SourceCategory::PastLocation => 9,
            SourceCategory::PastInterval => 10,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SourceCategory::Special(c) => c.label(),
            SourceCategory::Delimiter => "|",
            SourceCategory::PastLocation => "X",
            SourceCategory::PastInterval => "r",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Location,
    Interval,
}

/// Category of a token as an attention source. Tokens mixing an interval and
/// cell characters are classed by their first character; `_`, `,` and `.`
/// stay uncategorized.
pub fn source_category(surface: &str) -> Option<SourceCategory> {
    if let Some(t) = SpecialToken::from_str_exact(surface) {
        return Some(SourceCategory::Special(t.category()));
    }
    match classify(surface.chars().next()?)? {
        CharClass::Grammar(DELIMITER) => Some(SourceCategory::Delimiter),
        CharClass::Grammar(_) => None,
        CharClass::Symbol(SymbolKind::Level(_)) => Some(SourceCategory::PastLocation),
        CharClass::Symbol(SymbolKind::Interval) => Some(SourceCategory::PastInterval),
    }
}

/// Whether predicting this token is a location or an interval step.
pub fn step_kind(surface: &str) -> Option<StepKind> {
    match classify(surface.chars().next()?)? {
        CharClass::Symbol(SymbolKind::Level(_)) => Some(StepKind::Location),
        CharClass::Symbol(SymbolKind::Interval) => Some(StepKind::Interval),
        CharClass::Grammar(_) => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    pub steps: usize,
    /// `[layer][category]` mean attention mass.
    pub weights: Vec<[f64; N_CATEGORIES]>,
    /// Mass on uncategorized positions per layer.
    pub uncategorized: Vec<f64>,
    /// Categories that occurred in at least one attended prefix.
    pub present: [bool; N_CATEGORIES],
}

impl ProfileTable {
    fn new(layers: usize) -> Self {
        Self {
            steps: 0,
            weights: vec![[0.0; N_CATEGORIES]; layers],
            uncategorized: vec![0.0; layers],
            present: [false; N_CATEGORIES],
        }
    }

    fn finish(&mut self) {
        if self.steps > 0 {
            let n = self.steps as f64;
            for (w, u) in self.weights.iter_mut().zip(&mut self.uncategorized) {
                w.iter_mut().for_each(|x| *x /= n);
                *u /= n;
            }
        }
    }

    pub fn weight(&self, layer: usize, cat: SourceCategory) -> f64 {
        self.weights[layer][cat.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionProfile {
    pub location: ProfileTable,
    pub interval: ProfileTable,
    pub aggregation: &'static str,
}

pub const AGGREGATION: &str = "mean over heads, then mean over prediction steps pooled across lines";

/// Adds one step: `rows[layer]` is the head-averaged attention row.
fn accumulate(table: &mut ProfileTable, rows: &[Vec<f64>], cats: &[Option<SourceCategory>]) {
    table.steps += 1;
    for (l, row) in rows.iter().enumerate() {
        for (w, cat) in row.iter().zip(cats) {
            match cat {
                Some(c) => {
                    table.weights[l][c.index()] += w;
                    table.present[c.index()] = true;
                }
                None => table.uncategorized[l] += w,
            }
        }
    }
}

/// Bucketed attention of teacher-forced test lines.
pub fn attention_profile<F: Scalar>(
    model: &Model<F>,
    vocab: &BpeVocab,
    lines: &[Vec<u32>],
) -> Result<AttentionProfile, ModelError> {
    let layers = model.config.n_layers;
    let heads = model.config.n_heads;
    let mut location = ProfileTable::new(layers);
    let mut interval = ProfileTable::new(layers);
    for ids in lines {
        if ids.len() < 2 {
            continue;
        }
        let surfaces: Vec<&str> = ids.iter().map(|&t| vocab.surface(t)).collect::<Result<_, _>>()?;
        let cats: Vec<Option<SourceCategory>> = surfaces.iter().map(|s| source_category(s)).collect();
        let input = &ids[..ids.len() - 1];
        let n = input.len();
        let fwd = model.forward(input, true)?;
        let att = fwd.attention.expect("attention requested");
        for t in 0..n {
            let table = match step_kind(surfaces[t + 1]) {
                Some(StepKind::Location) => &mut location,
                Some(StepKind::Interval) => &mut interval,
                None => continue,
            };
            let rows: Vec<Vec<f64>> = att
                .iter()
                .map(|probs| {
                    (0..=t)
                        .map(|s| {
                            let sum: f64 = (0..heads).map(|h| probs[h * n * n + t * n + s].to_f64().unwrap_or(0.0)).sum();
                            sum / heads as f64
                        })
                        .collect()
                })
                .collect();
            accumulate(table, &rows, &cats[..=t]);
        }
    }
    location.finish();
    interval.finish();
    Ok(AttentionProfile { location, interval, aggregation: AGGREGATION })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_of_surfaces() {
        assert_eq!(source_category("[Weekend]"), Some(SourceCategory::Special(SpecialCategory::DayOfWeek)));
        assert_eq!(source_category("|"), Some(SourceCategory::Delimiter));
        assert_eq!(source_category("_"), None);
        assert_eq!(source_category("\u{E000}\u{E800}"), Some(SourceCategory::PastLocation));
        assert_eq!(source_category("\u{E8C2}\u{E000}"), Some(SourceCategory::PastInterval));
        assert_eq!(step_kind("\u{E8C2}"), Some(StepKind::Interval));
        assert_eq!(step_kind("."), None);
        let labels: Vec<&str> = SourceCategory::all().iter().map(|c| c.label()).collect();
        assert_eq!(labels.len(), 11);
        for (i, c) in SourceCategory::all().iter().enumerate() {
            assert_eq!(c.index(), i);
        }
    }

    #[test]
    fn accumulation_averages_steps() {
        let mut t = ProfileTable::new(1);
        let cats = [Some(SourceCategory::Delimiter), None, Some(SourceCategory::PastLocation)];
        accumulate(&mut t, &[vec![0.5, 0.25, 0.25]], &cats);
        accumulate(&mut t, &[vec![0.1, 0.1, 0.8]], &cats);
        t.finish();
        assert!((t.weight(0, SourceCategory::Delimiter) - 0.3).abs() < 1e-12);
        assert!((t.weight(0, SourceCategory::PastLocation) - 0.525).abs() < 1e-12);
        assert!((t.uncategorized[0] - 0.175).abs() < 1e-12);
    }
}
