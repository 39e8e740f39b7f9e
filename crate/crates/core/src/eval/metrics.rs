use std::fmt;

use crate::codec::{discretize_interval, representative_minutes, GeoPoint, DEFAULT_MIN_MINUTES};
use crate::corpus::{HomeFlag, LineStop, TrajectoryLine};

use super::geo::haversine_km;

/// Stops given to a generator before it continues the day.
pub const PROMPT_STOPS: usize = 4;
pub const RADII_KM: [f64; 2] = [3.0, 10.0];
pub const HORIZONS: [Horizon; 5] = [Horizon::Hours(1), Horizon::Hours(2), Horizon::Hours(4), Horizon::Hours(8), Horizon::Final];
/// Positions after the prompt scored by MALE.
pub const MALE_POSITIONS: usize = 4;

/// Prefix of a test line handed to the transformer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    /// Conditioning (if any) and the first four stops, ending with the fourth
    /// cell and its `,` when it was a temporary home return.
    pub text: String,
    pub stops: Vec<LineStop>,
}

/// Builds the prompt, or `None` for lines with fewer than four stops.
pub fn make_prompt(line: &TrajectoryLine, alphabet: &crate::codec::LevelAlphabet) -> Option<Prompt> {
    if line.stops.len() < PROMPT_STOPS {
        return None;
    }
    let mut stops: Vec<LineStop> = line.stops[..PROMPT_STOPS].to_vec();
    let last = stops.last_mut().expect("four stops");
    if last.flag == HomeFlag::FinalHome {
        last.flag = HomeFlag::NotHome;
    }
    let mut text = line.prefix_text();
    for s in &stops {
        if let Some(tau) = s.interval {
            text.push(crate::codec::SEPARATOR);
            text.push(alphabet.interval_char(tau).ok()?);
        }
        text.push_str(s.cell.as_str());
        if s.flag == HomeFlag::TempHome {
            text.push(crate::codec::TEMP_HOME);
        }
    }
    Some(Prompt { text, stops })
}

/// Carry-forward lookup: the last item whose time is at or before `t`, or the
/// first item when `t` precedes all of them. `times` must be sorted.
pub fn position_at<'a, T>(times: &[i64], items: &'a [T], t: i64) -> &'a T {
    assert!(!items.is_empty() && times.len() == items.len(), "timeline must be non-empty");
    let idx = times.partition_point(|&x| x <= t);
    &items[idx.saturating_sub(1)]
}

/// Positions over time relative to an anchor, in minutes.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub times: Vec<i64>,
    pub points: Vec<GeoPoint>,
    /// Last time at which the timeline is defined; `None` when complete.
    pub valid_until: Option<i64>,
}

impl Timeline {
    pub fn new(times: Vec<i64>, points: Vec<GeoPoint>) -> Self {
        assert_eq!(times.len(), points.len());
        assert!(times.windows(2).all(|w| w[0] <= w[1]), "times must be sorted");
        Self { times, points, valid_until: None }
    }

    pub fn at(&self, t: i64) -> Option<GeoPoint> {
        match self.valid_until {
            Some(limit) if t > limit => None,
            _ => Some(*position_at(&self.times, &self.points, t)),
        }
    }

    pub fn final_point(&self) -> Option<GeoPoint> {
        match self.valid_until {
            Some(_) => None,
            None => self.points.last().copied(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Horizon {
    Hours(u32),
    Final,
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Hours(h) => write!(f, "{h}h"),
            Horizon::Final => f.write_str("final"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HitCell {
    pub evaluated: usize,
    pub hits: [usize; 2],
}

impl HitCell {
    pub fn rate(&self, radius_idx: usize) -> Option<f64> {
        (self.evaluated > 0).then(|| self.hits[radius_idx] as f64 / self.evaluated as f64)
    }
}

/// Hit counts per horizon for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct HitRateRow {
    pub horizons: Vec<Horizon>,
    pub cells: Vec<HitCell>,
    /// Cases with at least one horizon excluded.
    pub excluded: usize,
}

impl HitRateRow {
    pub fn cell(&self, h: Horizon) -> Option<&HitCell> {
        self.horizons.iter().position(|&x| x == h).map(|i| &self.cells[i])
    }
}

/// Compares predicted and true positions at each horizon after the anchor;
/// `Final` compares the last positions. Undefined predictions are excluded.
pub fn hit_rate(cases: &[(Timeline, Timeline)], horizons: &[Horizon], radii_km: [f64; 2]) -> HitRateRow {
    let mut cells = vec![HitCell::default(); horizons.len()];
    let mut excluded = 0;
    for (pred, truth) in cases {
        let mut any_excluded = false;
        for (cell, h) in cells.iter_mut().zip(horizons) {
            let pair = match h {
                Horizon::Hours(n) => pred.at(*n as i64 * 60).zip(truth.at(*n as i64 * 60)),
                Horizon::Final => pred.final_point().zip(truth.final_point()),
            };
            let Some((p, t)) = pair else {
                any_excluded = true;
                continue;
            };
            let d = haversine_km(&p, &t);
            cell.evaluated += 1;
            for (k, r) in radii_km.iter().enumerate() {
                if d <= *r {
                    cell.hits[k] += 1;
                }
            }
        }
        excluded += usize::from(any_excluded);
    }
    HitRateRow { horizons: horizons.to_vec(), cells, excluded }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MaleCell {
    pub n: usize,
    pub sum: f64,
}

impl MaleCell {
    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Mean |log10 generated - log10 actual| at each position after the prompt,
/// over cases where both sides have that position.
pub fn male(cases: &[(Vec<f64>, Vec<f64>)]) -> [MaleCell; MALE_POSITIONS] {
    let mut out = [MaleCell::default(); MALE_POSITIONS];
    for (gen, actual) in cases {
        for (k, cell) in out.iter_mut().enumerate() {
            if let (Some(g), Some(a)) = (gen.get(k), actual.get(k)) {
                cell.n += 1;
                cell.sum += (g.log10() - a.log10()).abs();
            }
        }
    }
    out
}

/// Empirical CDF evaluated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub n: usize,
}

pub fn empirical_cdf(samples: &[f64], grid: &[f64]) -> Cdf {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let y = grid
        .iter()
        .map(|&x| if s.is_empty() { 0.0 } else { s.partition_point(|&v| v <= x) as f64 / s.len() as f64 })
        .collect();
    Cdf { x: grid.to_vec(), y, n: s.len() }
}

/// `0` followed by `n` log-spaced points from `lo` to `hi`.
pub fn log_grid_with_zero(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    std::iter::once(0.0).chain((0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))).collect()
}

/// Distances between the positions one hour apart, for each full hour from
/// the first stop that ends by the final stop. Timelines start at 0.
pub fn hourly_distances(timelines: &[Timeline]) -> Vec<f64> {
    let mut out = Vec::new();
    for tl in timelines {
        let end = *tl.times.last().expect("non-empty timeline");
        let mut h = 0;
        while h + 60 <= end {
            if let (Some(a), Some(b)) = (tl.at(h), tl.at(h + 60)) {
                out.push(haversine_km(&a, &b));
            }
            h += 60;
        }
    }
    out
}

pub fn hourly_distance_cdf(timelines: &[Timeline], grid: &[f64]) -> Cdf {
    empirical_cdf(&hourly_distances(timelines), grid)
}

/// Maps each interval to the representative minutes of its bin.
pub fn roundtrip_minutes(dt: f64) -> f64 {
    let dt = dt.max(1.0);
    let tau = discretize_interval(dt).expect("dt >= 1");
    representative_minutes(tau, DEFAULT_MIN_MINUTES) as f64
}

pub fn interval_cdf(intervals: &[f64], grid: &[f64]) -> Cdf {
    let mapped: Vec<f64> = intervals.iter().map(|&d| roundtrip_minutes(d)).collect();
    empirical_cdf(&mapped, grid)
}

/// Exact two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
