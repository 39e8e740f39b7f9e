//! Scoring generated continuations and baseline runs against test days.
//!
//! Every test day with at least four stops is a case. All clocks are minutes
//! since the day's first stop. The four prompt stops keep their exact
//! arrival minutes; generated stops after them are placed by adding the
//! representative minutes of their interval bins to the fourth arrival.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use trajlang_core::baselines::{resample_fixed, ArModel, MarkovModel, AR_HORIZON_MINUTES};
use trajlang_core::codec::{decode_center, representative_minutes, CellString, GeoPoint, LevelAlphabet, DEFAULT_MIN_MINUTES};
use trajlang_core::corpus::{parse, DayRecord, DayTrajectory, TrajectoryLine};
use trajlang_core::eval::{
    hit_rate, hourly_distance_cdf, interval_cdf, ks_statistic, log_grid_with_zero, male, roundtrip_minutes, MetricsReport,
    Timeline, HORIZONS, PROMPT_STOPS, RADII_KM,
};

use crate::config::{RunConfig, TruthClock};
use crate::error::CliError;

/// Generator stream offsets, so that no two uses of the run seed share a
/// ChaCha stream.
pub const STREAM_GENERATE: u64 = 1 << 48;
pub const STREAM_MARKOV: u64 = 2 << 48;
pub const STREAM_AR: u64 = 3 << 48;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenStatus {
    Ok,
    Truncated,
    DeadEnd,
    MaxTokens,
    Unparsable,
}

impl GenStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            GenStatus::Ok => "ok",
            GenStatus::Truncated => "truncated",
            GenStatus::DeadEnd => "dead_end",
            GenStatus::MaxTokens => "max_tokens",
            GenStatus::Unparsable => "unparsable",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [GenStatus::Ok, GenStatus::Truncated, GenStatus::DeadEnd, GenStatus::MaxTokens, GenStatus::Unparsable]
            .into_iter()
            .find(|g| g.as_str() == s)
    }
}

/// One generated line: the prompt followed by the model's continuation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedRow {
    /// Position of the source day in the test records.
    pub index: usize,
    pub device_id: String,
    pub date: String,
    pub sample: usize,
    pub status: GenStatus,
    pub text: String,
}

pub fn write_generated<W: Write>(mut w: W, rows: &[GeneratedRow]) -> std::io::Result<()> {
    writeln!(w, "index\tdevice_id\tdate\tsample\tstatus\ttext")?;
    for r in rows {
        writeln!(w, "{}\t{}\t{}\t{}\t{}\t{}", r.index, r.device_id, r.date, r.sample, r.status.as_str(), r.text)?;
    }
    Ok(())
}

pub fn read_generated<R: BufRead>(r: R) -> Result<Vec<GeneratedRow>, CliError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.is_empty() {
            continue;
        }
        let bad = || CliError::data(format!("generated file line {}", i + 1));
        let f: Vec<&str> = line.splitn(6, '\t').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        out.push(GeneratedRow {
            index: f[0].parse().map_err(|_| bad())?,
            device_id: f[1].to_string(),
            date: f[2].to_string(),
            sample: f[3].parse().map_err(|_| bad())?,
            status: GenStatus::parse(f[4]).ok_or_else(bad)?,
            text: f[5].to_string(),
        });
    }
    Ok(out)
}

/// A test day that qualifies for generation-based metrics.
#[derive(Debug, Clone)]
pub struct Case {
    pub index: usize,
    pub day: DayTrajectory,
    pub line: TrajectoryLine,
}

/// Test days with at least four stops, in record order.
pub fn cases(test: &[DayRecord], alphabet: &LevelAlphabet) -> Result<Vec<Case>, CliError> {
    let mut out = Vec::new();
    for (index, rec) in test.iter().enumerate() {
        let day = rec.day(alphabet)?;
        if day.stops.len() < PROMPT_STOPS {
            continue;
        }
        let line = rec.parsed(alphabet)?;
        out.push(Case { index, day, line });
    }
    Ok(out)
}

struct Centers<'a> {
    alphabet: &'a LevelAlphabet,
    cache: HashMap<CellString, GeoPoint>,
}

impl<'a> Centers<'a> {
    fn new(alphabet: &'a LevelAlphabet) -> Self {
        Self { alphabet, cache: HashMap::new() }
    }

    fn get(&mut self, cell: &CellString) -> Result<GeoPoint, CliError> {
        if let Some(p) = self.cache.get(cell) {
            return Ok(*p);
        }
        let p = decode_center(&self.alphabet.chars_to_cell(cell.as_str())?);
        self.cache.insert(cell.clone(), p);
        Ok(p)
    }
}

fn repr(tau: u32) -> f64 {
    representative_minutes(tau, DEFAULT_MIN_MINUTES) as f64
}

/// Arrival minutes: exact for the prompt stops, then representative bin
/// minutes added to the fourth arrival.
fn clock(day: &DayTrajectory, line: &TrajectoryLine) -> Vec<i64> {
    let mut times: Vec<i64> = day.stops[..PROMPT_STOPS].iter().map(|s| s.offset as i64).collect();
    let mut t = *times.last().expect("prompt stops");
    for s in &line.stops[PROMPT_STOPS..] {
        t += repr(s.interval.expect("stops after the first carry an interval")) as i64;
        times.push(t);
    }
    times
}

fn truth_timeline(case: &Case, clock_kind: TruthClock, centers: &mut Centers) -> Result<Timeline, CliError> {
    let times = match clock_kind {
        TruthClock::Exact => case.day.stops.iter().map(|s| s.offset as i64).collect(),
        TruthClock::Representative => clock(&case.day, &case.line),
    };
    let points = case.day.stops.iter().map(|s| centers.get(&s.cell)).collect::<Result<_, _>>()?;
    Ok(Timeline::new(times, points))
}

/// The prompt alone, defined only up to the fourth arrival.
fn prompt_only(case: &Case, centers: &mut Centers) -> Result<Timeline, CliError> {
    let stops = &case.day.stops[..PROMPT_STOPS];
    let times: Vec<i64> = stops.iter().map(|s| s.offset as i64).collect();
    let points = stops.iter().map(|s| centers.get(&s.cell)).collect::<Result<_, _>>()?;
    let mut tl = Timeline::new(times, points);
    tl.valid_until = Some(stops[PROMPT_STOPS - 1].offset as i64);
    Ok(tl)
}

/// Parses a generated row whose prompt matches the case.
fn generated_line(row: &GeneratedRow, case: &Case, alphabet: &LevelAlphabet) -> Option<TrajectoryLine> {
    if row.status != GenStatus::Ok {
        return None;
    }
    let line = parse(&row.text, alphabet).ok()?;
    let same_prompt = line.stops.len() > PROMPT_STOPS
        && line.stops[..PROMPT_STOPS].iter().zip(&case.line.stops).all(|(a, b)| a.cell == b.cell && a.interval == b.interval);
    same_prompt.then_some(line)
}

/// Inputs of one evaluation.
pub struct EvalInputs<'a> {
    pub alphabet: &'a LevelAlphabet,
    pub test: &'a [DayRecord],
    pub generated: Option<&'a [GeneratedRow]>,
    pub markov: Vec<(String, &'a MarkovModel)>,
    pub ar: Option<&'a ArModel>,
    pub config: &'a RunConfig,
}

/// Counts that do not fit the metric tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalCounts {
    pub cases: usize,
    pub generated_rows: usize,
    pub generated_failed: usize,
    /// Per baseline name, runs that hit an infeasible condition.
    pub infeasible: Vec<(String, usize)>,
}

pub fn evaluate(inp: &EvalInputs) -> Result<(MetricsReport, EvalCounts), CliError> {
    let cfg = inp.config;
    let cases = cases(inp.test, inp.alphabet)?;
    let mut centers = Centers::new(inp.alphabet);
    let mut report = MetricsReport::default();
    let mut counts = EvalCounts { cases: cases.len(), ..Default::default() };

    let truths: Vec<Timeline> =
        cases.iter().map(|c| truth_timeline(c, cfg.eval.truth_clock, &mut centers)).collect::<Result<_, _>>()?;
    let truth_intervals: Vec<f64> =
        cases.iter().flat_map(|c| c.day.gaps()[PROMPT_STOPS - 1..].to_vec()).map(f64::from).collect();
    let mut distance_series = vec![("truth".to_string(), truths.clone())];
    let mut interval_series = vec![("truth".to_string(), truth_intervals.clone())];

    if let Some(rows) = inp.generated {
        let by_index: HashMap<usize, usize> = cases.iter().enumerate().map(|(i, c)| (c.index, i)).collect();
        let mut pairs = Vec::new();
        let mut male_cases = Vec::new();
        let mut gen_intervals = Vec::new();
        let mut complete = Vec::new();
        for row in rows {
            let Some(&ci) = by_index.get(&row.index) else {
                return Err(CliError::data(format!("generated row for test day {} which has no prompt", row.index)));
            };
            let case = &cases[ci];
            let rec = &inp.test[case.index];
            if rec.device_id != row.device_id || rec.date.to_string() != row.date {
                return Err(CliError::data(format!("generated row {} does not match the test split", row.index)));
            }
            counts.generated_rows += 1;
            let pred = match generated_line(row, case, inp.alphabet) {
                Some(line) => {
                    let times = clock(&case.day, &line);
                    let points = line.stops.iter().map(|s| centers.get(&s.cell)).collect::<Result<_, _>>()?;
                    let gen: Vec<f64> = line.stops[PROMPT_STOPS..].iter().filter_map(|s| s.interval).map(repr).collect();
                    let actual: Vec<f64> = case.day.gaps()[PROMPT_STOPS - 1..].iter().map(|&g| g as f64).collect();
                    gen_intervals.extend(&gen);
                    male_cases.push((gen, actual));
                    let tl = Timeline::new(times, points);
                    complete.push(tl.clone());
                    tl
                }
                None => {
                    counts.generated_failed += 1;
                    prompt_only(case, &mut centers)?
                }
            };
            pairs.push((pred, truths[ci].clone()));
        }
        report.hit_rates.push(("transformer".into(), hit_rate(&pairs, &HORIZONS, RADII_KM)));
        report.male.push(("transformer".into(), male(&male_cases)));
        distance_series.push(("transformer".into(), complete));
        interval_series.push(("transformer".into(), gen_intervals));
    }

    for (name, model) in &inp.markov {
        let order = model.order();
        let step = cfg.markov.step_minutes as i64;
        let mut pairs = Vec::with_capacity(cases.len());
        let mut complete = Vec::new();
        let mut infeasible = 0;
        for (ci, case) in cases.iter().enumerate() {
            let grid = resample_fixed(&case.day, cfg.markov.step_minutes);
            let mut rng = stream_rng(cfg.seed, STREAM_MARKOV + ((order as u64) << 32) + case.index as u64);
            let init = &grid[..order.min(grid.len())];
            let (cells, valid_until) = if init.len() < order {
                (init.to_vec(), Some(-1))
            } else {
                let run = model.generate(init, cfg.markov.steps, &mut rng)?;
                let limit = run.infeasible_at.map(|j| (order - 1 + j) as i64 * step - 1);
                let mut cells = init.to_vec();
                cells.extend(run.cells);
                (cells, limit)
            };
            let times: Vec<i64> = (0..cells.len() as i64).map(|k| k * step).collect();
            let points = cells.iter().map(|c| centers.get(c)).collect::<Result<_, _>>()?;
            let mut tl = Timeline::new(times, points);
            tl.valid_until = valid_until;
            if valid_until.is_some() {
                infeasible += 1;
            } else {
                complete.push(tl.clone());
            }
            pairs.push((tl, truths[ci].clone()));
        }
        report.hit_rates.push((name.clone(), hit_rate(&pairs, &HORIZONS, RADII_KM)));
        distance_series.push((name.clone(), complete));
        counts.infeasible.push((name.clone(), infeasible));
    }

    if let Some(ar) = inp.ar {
        let p = ar.order();
        if p > PROMPT_STOPS - 1 {
            return Err(CliError::config(format!("AR order {p} needs more than the {} prompt intervals", PROMPT_STOPS - 1)));
        }
        let mut male_cases = Vec::with_capacity(cases.len());
        let mut gen_intervals = Vec::new();
        for case in &cases {
            let gaps: Vec<f64> = case.day.gaps().iter().map(|&g| g as f64).collect();
            let mut rng = stream_rng(cfg.seed, STREAM_AR + case.index as u64);
            let gen = ar.generate(&gaps[..PROMPT_STOPS - 1], AR_HORIZON_MINUTES, &mut rng)?;
            gen_intervals.extend(&gen);
            male_cases.push((gen, gaps[PROMPT_STOPS - 1..].to_vec()));
        }
        report.male.push(("ar".into(), male(&male_cases)));
        interval_series.push(("ar".into(), gen_intervals));
    }

    let dgrid = log_grid_with_zero(0.01, 100.0, cfg.eval.distance_grid_points - 1);
    for (name, tls) in &distance_series {
        if !tls.is_empty() {
            report.distance_cdfs.push((name.clone(), hourly_distance_cdf(tls, &dgrid)));
        }
    }
    let igrid: Vec<f64> = (0..=cfg.eval.max_interval_minutes).map(f64::from).collect();
    let truth_mapped: Vec<f64> = truth_intervals.iter().map(|&d| roundtrip_minutes(d)).collect();
    for (name, iv) in &interval_series {
        report.interval_cdfs.push((name.clone(), interval_cdf(iv, &igrid)));
        if name != "truth" {
            let mapped: Vec<f64> = iv.iter().map(|&d| roundtrip_minutes(d)).collect();
            report.interval_ks.push((name.clone(), ks_statistic(&mapped, &truth_mapped)));
        }
    }
    Ok((report, counts))
}

/// One JSON object per model with its hit rates, MALE and KS distance.
pub fn report_json(report: &MetricsReport, counts: &EvalCounts) -> Vec<serde_json::Value> {
    let mut names: Vec<&str> = Vec::new();
    for n in report
        .hit_rates
        .iter()
        .map(|(n, _)| n.as_str())
        .chain(report.male.iter().map(|(n, _)| n.as_str()))
        .chain(report.interval_ks.iter().map(|(n, _)| n.as_str()))
    {
        if !names.contains(&n) {
            names.push(n);
        }
    }
    let mut out = vec![json!({
        "cases": counts.cases,
        "generated_rows": counts.generated_rows,
        "generated_failed": counts.generated_failed,
        "infeasible": counts.infeasible.iter().map(|(n, c)| (n.clone(), json!(c))).collect::<serde_json::Map<_, _>>(),
    })];
    for name in names {
        let mut obj = serde_json::Map::new();
        obj.insert("model".into(), json!(name));
        if let Some(row) = report.hit_row(name) {
            let mut hits = serde_json::Map::new();
            for (h, c) in row.horizons.iter().zip(&row.cells) {
                hits.insert(h.to_string(), json!({ "3km": c.rate(0), "10km": c.rate(1), "n": c.evaluated }));
            }
            obj.insert("hit_rate".into(), serde_json::Value::Object(hits));
            obj.insert("excluded".into(), json!(row.excluded));
        }
        if let Some(cells) = report.male_row(name) {
            obj.insert("male".into(), json!(cells.iter().map(|c| c.mean()).collect::<Vec<_>>()));
        }
        if let Some(ks) = report.ks(name) {
            obj.insert("interval_ks".into(), json!(ks));
        }
        out.push(serde_json::Value::Object(obj));
    }
    out
}
