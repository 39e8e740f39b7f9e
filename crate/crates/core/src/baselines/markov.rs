//! First- and second-order Markov chains over cells on a fixed time grid.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use num_rational::Ratio;
use rand::Rng;

use crate::codec::CellString;
use crate::corpus::DayTrajectory;

use super::BaselineError;

pub const MARKOV_STEP_MINUTES: u32 = 30;
/// A condition is usable only when seen in more than this many samples.
pub const FEASIBILITY_THRESHOLD: u64 = 30;
/// 26 half-hour steps cover 13 hours.
pub const MARKOV_STEPS: usize = 26;

const DUMP_HEADER: &str = "#trajlang-markov v1";

/// Carry-forward position sampled every `step` minutes from the first stop
/// until the final stop's arrival.
pub fn resample_fixed(day: &DayTrajectory, step: u32) -> Vec<CellString> {
    let n = day.final_offset() / step + 1;
    let mut out = Vec::with_capacity(n as usize);
    let mut j = 0;
    for k in 0..n {
        let t = k * step;
        while j + 1 < day.stops.len() && day.stops[j + 1].offset <= t {
            j += 1;
        }
        out.push(day.stops[j].cell.clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovModel {
    order: usize,
    threshold: u64,
    counts: BTreeMap<Vec<CellString>, BTreeMap<CellString, u64>>,
}

/// Outcome of one generation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovRun {
    /// Generated cells, excluding the initial ones.
    pub cells: Vec<CellString>,
    /// 1-based step at which an infeasible condition stopped generation.
    pub infeasible_at: Option<usize>,
}

impl MarkovModel {
    /// Maximum-likelihood transition counts from cell sequences.
    pub fn fit<S: AsRef<[CellString]>>(sequences: &[S], order: usize) -> Result<Self, BaselineError> {
        if !(1..=2).contains(&order) {
            return Err(BaselineError::InvalidOrder(order));
        }
        let mut counts: BTreeMap<Vec<CellString>, BTreeMap<CellString, u64>> = BTreeMap::new();
        for seq in sequences {
            for w in seq.as_ref().windows(order + 1) {
                *counts.entry(w[..order].to_vec()).or_default().entry(w[order].clone()).or_default() += 1;
            }
        }
        Ok(Self { order, threshold: FEASIBILITY_THRESHOLD, counts })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn count(&self, condition: &[CellString]) -> u64 {
        self.counts.get(condition).map_or(0, |m| m.values().sum())
    }

    pub fn is_feasible(&self, condition: &[CellString]) -> bool {
        self.count(condition) > self.threshold
    }

    /// Exact conditional probability, or `None` for an unseen condition.
    pub fn probability(&self, condition: &[CellString], dest: &CellString) -> Option<Ratio<u64>> {
        let row = self.counts.get(condition)?;
        let total: u64 = row.values().sum();
        Some(Ratio::new(row.get(dest).copied().unwrap_or(0), total))
    }

    pub fn conditions(&self) -> impl Iterator<Item = (&[CellString], &BTreeMap<CellString, u64>)> {
        self.counts.iter().map(|(k, v)| (k.as_slice(), v))
    }

    /// Samples `steps` cells after `init`, stopping at the first infeasible
    /// condition.
    pub fn generate<R: Rng>(&self, init: &[CellString], steps: usize, rng: &mut R) -> Result<MarkovRun, BaselineError> {
        if init.len() != self.order {
            return Err(BaselineError::InitLength { expected: self.order, got: init.len() });
        }
        let mut history: Vec<CellString> = init.to_vec();
        let mut cells = Vec::with_capacity(steps);
        for step in 1..=steps {
            let cond = &history[history.len() - self.order..];
            let row = match self.counts.get(cond) {
                Some(row) if self.is_feasible(cond) => row,
                _ => return Ok(MarkovRun { cells, infeasible_at: Some(step) }),
            };
            let total: u64 = row.values().sum();
            let mut u = rng.gen_range(0..total);
            let next = row
                .iter()
                .find(|(_, &c)| {
                    if u < c {
                        true
                    } else {
                        u -= c;
                        false
                    }
                })
                .map(|(cell, _)| cell.clone())
                .expect("draw below total");
            history.push(next.clone());
            cells.push(next);
        }
        Ok(MarkovRun { cells, infeasible_at: None })
    }

    /// Text dump: header, then `condition<TAB>destination<TAB>count` rows with
    /// the cells of a second-order condition separated by a space.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{DUMP_HEADER} order={} threshold={}", self.order, self.threshold)?;
        for (cond, row) in &self.counts {
            let cond: Vec<&str> = cond.iter().map(CellString::as_str).collect();
            for (dest, n) in row {
                writeln!(w, "{}\t{}\t{n}", cond.join(" "), dest.as_str())?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, BaselineError> {
        let bad = |m: &str| BaselineError::Format(m.to_string());
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let rest = header.strip_prefix(DUMP_HEADER).ok_or_else(|| bad("markov header"))?;
        let mut order = None;
        let mut threshold = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("order", v)) => order = v.parse().ok(),
                Some(("threshold", v)) => threshold = v.parse().ok(),
                _ => return Err(bad("markov header field")),
            }
        }
        let (order, threshold) = order.zip(threshold).ok_or_else(|| bad("markov header fields"))?;
        let mut counts: BTreeMap<Vec<CellString>, BTreeMap<CellString, u64>> = BTreeMap::new();
        for line in lines {
            let line = line?;
            let mut it = line.split('\t');
            let (Some(c), Some(d), Some(n), None) = (it.next(), it.next(), it.next(), it.next()) else {
                return Err(bad("markov row"));
            };
            let cond = c.split(' ').map(CellString::from_chars).collect::<Result<Vec<_>, _>>()?;
            if cond.len() != order {
                return Err(bad("markov condition length"));
            }
            let n: u64 = n.parse().map_err(|_| bad("markov count"))?;
            counts.entry(cond).or_default().insert(CellString::from_chars(d)?, n);
        }
        Ok(Self { order, threshold, counts })
    }
}
