//! One function per subcommand. Each validates its inputs, stages its
//! outputs and commits them only on success, together with a snapshot of the
//! configuration it actually used.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use trajlang_core::baselines::{aic_table, resample_fixed, ArModel, MarkovModel};
use trajlang_core::codec::{decode_center, encode_cell, BoundingBox, GeoPoint, GridCode, LevelAlphabet};
use trajlang_core::corpus::{
    build_corpus, ingest, read_day_records, read_environment_csv, write_day_records, write_environment_csv, write_pings,
    DayRecord, PingRecord, TrajectoryLine,
};
use trajlang_core::eval::{make_prompt, MetricsReport};
use trajlang_core::synthgen::{generate_corpus, WorldConfig};
use trajlang_core::tokenizer::{train_bpe, BpeVocab};
use trajlang_model::profile::{ProfileTable, N_CATEGORIES};
use trajlang_model::{
    attention_profile, generate as sample, BodyState, Checkpoint, LineGrammar, Model, SourceCategory, Trainer,
};

use crate::args::*;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::evaluate::{
    evaluate, read_generated, report_json, stream_rng, write_generated, EvalInputs, GenStatus, GeneratedRow,
    STREAM_GENERATE,
};
use crate::output::{require_dir, require_file, Outputs};
use crate::Report;

pub const ALPHABET_FILE: &str = "alphabet.tsv";
pub const SPLIT_FILE: &str = "split.txt";
pub const TRAIN_FILE: &str = "train.days.tsv";
pub const TEST_FILE: &str = "test.days.tsv";

/// Settings shared by every command of one invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    /// Print training progress to stderr.
    pub progress: bool,
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    require_file(path)?;
    Ok(BufReader::new(File::open(path)?))
}

fn snapshot_path(out: &Path, command: &str, out_is_dir: bool) -> PathBuf {
    if out_is_dir {
        out.join(format!("{command}.config.toml"))
    } else {
        let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| command.to_string());
        out.with_file_name(format!("{name}.config.toml"))
    }
}

fn finish(
    mut outputs: Outputs,
    cfg: &RunConfig,
    out: &Path,
    command: &str,
    out_is_dir: bool,
    report: Report,
) -> Result<Report, CliError> {
    outputs.write_str(&snapshot_path(out, command, out_is_dir), &cfg.to_toml())?;
    let files = outputs.commit()?;
    Ok(Report { outputs: files, ..report })
}

/// Loaded corpus directory.
pub struct CorpusDir {
    pub alphabet: LevelAlphabet,
    pub train: Vec<DayRecord>,
    pub test: Vec<DayRecord>,
}

impl CorpusDir {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        require_dir(dir)?;
        for f in [ALPHABET_FILE, TRAIN_FILE, TEST_FILE] {
            require_file(&dir.join(f))?;
        }
        let alphabet = LevelAlphabet::read_sidecar(open(&dir.join(ALPHABET_FILE))?)?;
        let train = read_day_records(open(&dir.join(TRAIN_FILE))?)?;
        let test = read_day_records(open(&dir.join(TEST_FILE))?)?;
        Ok(Self { alphabet, train, test })
    }
}

pub fn load_vocab(path: &Path) -> Result<BpeVocab, CliError> {
    Ok(BpeVocab::read(open(path)?)?)
}

pub fn load_model(path: &Path, vocab: &BpeVocab) -> Result<Model<f32>, CliError> {
    require_file(path)?;
    let model = Checkpoint::load(path)?.model()?;
    if model.config.vocab_size != vocab.len() {
        return Err(CliError::config(format!(
            "checkpoint expects {} tokens but the vocabulary has {}",
            model.config.vocab_size,
            vocab.len()
        )));
    }
    Ok(model)
}

#[derive(Serialize)]
struct WorldFile<'a> {
    version: u32,
    seed: u64,
    n_agents: usize,
    n_days: usize,
    world: &'a WorldConfig,
    agents: Vec<AgentEntry>,
}

#[derive(Serialize)]
struct AgentEntry {
    id: String,
    /// `[lat, lon]` of home, hub, transfer, work station, work and three
    /// leisure places.
    anchors: Vec<[f64; 2]>,
}

pub fn synth(ctx: &Context, a: &SynthArgs) -> Result<Report, CliError> {
    let mut cfg = ctx.config.clone();
    if let Some(n) = a.agents {
        cfg.synth.n_agents = n;
    }
    if let Some(n) = a.days {
        cfg.synth.n_days = n;
    }
    cfg.validate()?;
    let s = &cfg.synth;
    let corpus = generate_corpus(&s.world, s.n_agents, s.n_days, cfg.seed)?;
    let mut out = Outputs::new();
    let n_pings = corpus.pings.len();
    out.write(&a.out.join("pings.csv"), |w| Ok(write_pings(w, corpus.pings.iter().cloned())?))?;
    out.write(&a.out.join("environment.csv"), |w| Ok(write_environment_csv(w, &corpus.environment)?))?;
    let world = WorldFile {
        version: 1,
        seed: cfg.seed,
        n_agents: s.n_agents,
        n_days: s.n_days,
        world: &s.world,
        agents: corpus
            .world
            .agents
            .iter()
            .map(|ag| AgentEntry { id: ag.id.clone(), anchors: ag.anchors.iter().map(|p| [p.lat(), p.lon()]).collect() })
            .collect(),
    };
    let text = toml::to_string(&world).map_err(|e| CliError::data(e.to_string()))?;
    out.write_str(&a.out.join("world.toml"), &text)?;
    let record = json!({ "command": "synth", "agents": s.n_agents, "days": s.n_days, "pings": n_pings });
    let report = Report::new(
        record,
        format!("synthesized {} agents x {} days: {n_pings} pings", s.n_agents, s.n_days),
    );
    finish(out, &cfg, &a.out, "synth", true, report)
}

pub fn ingest_cmd(ctx: &Context, a: &IngestArgs) -> Result<Report, CliError> {
    let cfg = ctx.config.clone();
    let (devices, summary) = ingest(open(&a.pings)?, &BoundingBox::JAPAN)?;
    let mut out = Outputs::new();
    let rows = devices.iter().flat_map(|d| {
        d.pings.iter().map(|p| PingRecord { device_id: d.device_id.clone(), time: p.time, point: p.point, attrs: d.attrs })
    });
    out.write(&a.out.join("pings.csv"), |w| Ok(write_pings(w, rows)?))?;
    let record = json!({
        "command": "ingest",
        "devices": devices.len(),
        "rows": summary.rows,
        "accepted": summary.accepted,
        "malformed": summary.malformed,
        "outside_bbox": summary.outside_bbox,
        "duplicates": summary.duplicates,
    });
    out.write_str(&a.out.join("ingest.json"), &format!("{record}\n"))?;
    let text = format!(
        "{} rows: {} accepted, {} malformed, {} outside the box, {} duplicates; {} devices",
        summary.rows,
        summary.accepted,
        summary.malformed,
        summary.outside_bbox,
        summary.duplicates,
        devices.len()
    );
    finish(out, &cfg, &a.out, "ingest", true, Report::new(record, text))
}

pub fn encode(a: &EncodeArgs) -> Result<Report, CliError> {
    let p = GeoPoint::new(a.lat, a.lon).map_err(|e| CliError::config(e.to_string()))?;
    let code = encode_cell(&p, a.level, &BoundingBox::JAPAN).map_err(|e| CliError::config(e.to_string()))?;
    let mut record = json!({ "command": "encode", "level": a.level, "code": code.to_string() });
    let mut text = code.to_string();
    if let Some(path) = &a.alphabet {
        let alphabet = LevelAlphabet::read_sidecar(open(path)?)?;
        let fine = encode_cell(&p, 5, alphabet.bbox())?;
        let cell = alphabet.cell_to_chars(&fine)?;
        let points: Vec<String> = cell.as_str().chars().map(|c| format!("U+{:04X}", c as u32)).collect();
        record["cell"] = json!(cell.as_str());
        record["codepoints"] = json!(points);
        text = format!("{text}\t{}\t{}", cell.as_str(), points.join(" "));
    }
    Ok(Report::new(record, text))
}

/// Parses hyphen-separated mesh indices; the count gives the level.
pub fn parse_code(s: &str) -> Result<GridCode, CliError> {
    let bad = || CliError::config(format!("malformed mesh code {s:?}"));
    let parts: Vec<i64> = s.split('-').map(|x| x.trim().parse::<i64>().map_err(|_| bad())).collect::<Result<_, _>>()?;
    let level = match parts.len() {
        2 => 1,
        4 => 2,
        6 => 3,
        7 => 4,
        8 => 5,
        _ => return Err(bad()),
    };
    let mut v = [0i64; 8];
    v[..parts.len()].copy_from_slice(&parts);
    let small = |x: i64| u8::try_from(x).map_err(|_| bad());
    GridCode::new(
        level,
        i32::try_from(v[0]).map_err(|_| bad())?,
        i32::try_from(v[1]).map_err(|_| bad())?,
        small(v[2])?,
        small(v[3])?,
        small(v[4])?,
        small(v[5])?,
        small(v[6])?,
        small(v[7])?,
    )
    .map_err(|e| CliError::config(e.to_string()))
}

pub fn decode(a: &DecodeArgs) -> Result<Report, CliError> {
    let code = match (&a.code, &a.cell, &a.alphabet) {
        (Some(c), _, _) => parse_code(c)?,
        (None, Some(cell), Some(path)) => LevelAlphabet::read_sidecar(open(path)?)?.chars_to_cell(cell)?,
        _ => return Err(CliError::config("decode needs --code, or --cell with --alphabet")),
    };
    let c = decode_center(&code);
    let (lat0, lon0, lat1, lon1) = code.bounds();
    let record = json!({
        "command": "decode",
        "code": code.to_string(),
        "level": code.level(),
        "lat": c.lat(),
        "lon": c.lon(),
        "bounds": [lat0, lon0, lat1, lon1],
    });
    Ok(Report::new(record, format!("{} {:.6} {:.6}", code, c.lat(), c.lon())))
}

pub fn build_corpus_cmd(ctx: &Context, a: &BuildCorpusArgs) -> Result<Report, CliError> {
    let mut cfg = ctx.config.clone();
    if a.unconditioned {
        cfg.corpus.conditioned = false;
    }
    cfg.validate()?;
    require_file(&a.pings)?;
    require_file(&a.environment)?;
    let (devices, summary) = ingest(open(&a.pings)?, &BoundingBox::JAPAN)?;
    let env = read_environment_csv(open(&a.environment)?)?;
    let built = build_corpus(&devices, &env, LevelAlphabet::default(), &cfg.build_options())?;
    let mut out = Outputs::new();
    out.write(&a.out.join(ALPHABET_FILE), |w| Ok(built.alphabet.write_sidecar(w)?))?;
    out.write(&a.out.join(SPLIT_FILE), |w| Ok(built.manifest.write(w)?))?;
    out.write(&a.out.join(TRAIN_FILE), |w| Ok(write_day_records(w, &built.train)?))?;
    out.write(&a.out.join(TEST_FILE), |w| Ok(write_day_records(w, &built.test)?))?;
    let st = built.stats;
    let record = json!({
        "command": "build-corpus",
        "rows": summary.rows,
        "devices": st.devices,
        "devices_without_night": st.devices_without_night,
        "devices_without_days": st.devices_without_days,
        "days": st.days,
        "train_days": built.train.len(),
        "test_days": built.test.len(),
        "symbols": built.alphabet.symbols().len(),
    });
    let text = format!(
        "{} devices ({} without night pings, {} without days): {} days, {} train / {} test",
        st.devices,
        st.devices_without_night,
        st.devices_without_days,
        st.days,
        built.train.len(),
        built.test.len()
    );
    finish(out, &cfg, &a.out, "build-corpus", true, Report::new(record, text))
}

pub fn train_bpe_cmd(ctx: &Context, a: &TrainBpeArgs) -> Result<Report, CliError> {
    let mut cfg = ctx.config.clone();
    if let Some(v) = a.vocab_size {
        cfg.bpe.vocab_size = v;
    }
    cfg.validate()?;
    let corpus = CorpusDir::load(&a.corpus)?;
    let vocab = train_bpe(corpus.train.iter().map(|r| r.line.as_str()), cfg.bpe.vocab_size, &corpus.alphabet.symbols())?;
    let mut out = Outputs::new();
    out.write(&a.out, |w| Ok(vocab.write(w)?))?;
    let record = json!({
        "command": "train-bpe",
        "vocab_size": vocab.len(),
        "base_size": vocab.base_size(),
        "merges": vocab.merges().len(),
    });
    let text = format!("{} tokens ({} base, {} merges)", vocab.len(), vocab.base_size(), vocab.merges().len());
    finish(out, &cfg, &a.out, "train-bpe", false, Report::new(record, text))
}

/// Token ids of each record's line, with or without conditioning; lines that
/// do not fit the context are dropped and counted.
pub fn encode_lines(
    records: &[DayRecord],
    vocab: &BpeVocab,
    conditioned: bool,
    context: usize,
) -> Result<(Vec<Vec<u32>>, usize), CliError> {
    let mut out = Vec::with_capacity(records.len());
    let mut dropped = 0;
    for r in records {
        let text = if conditioned { r.line.as_str() } else { r.unconditioned_line() };
        let ids = vocab.tokenize(text)?;
        if ids.len() < 2 || ids.len() > context + 1 {
            dropped += 1;
        } else {
            out.push(ids);
        }
    }
    Ok((out, dropped))
}

pub fn train(ctx: &Context, a: &TrainArgs) -> Result<Report, CliError> {
    let mut cfg = ctx.config.clone();
    if let Some(s) = a.steps {
        cfg.train.total_steps = s;
    }
    if a.unconditioned {
        cfg.train.conditioned = false;
    }
    cfg.validate()?;
    let corpus = CorpusDir::load(&a.corpus)?;
    let vocab = load_vocab(&a.vocab)?;
    let mcfg = cfg.model_config(vocab.len());
    let (data, dropped) = encode_lines(&corpus.train, &vocab, cfg.train.conditioned, mcfg.context_length)?;
    if data.is_empty() {
        return Err(CliError::data("no training line fits the context"));
    }
    let (test, _) = encode_lines(&corpus.test, &vocab, cfg.train.conditioned, mcfg.context_length)?;
    let mut trainer = Trainer::new(Model::<f32>::init(mcfg)?, cfg.train_config())?;
    let mut log = String::from("step,loss,grad_norm,lr\n");
    let every = cfg.train.log_every;
    let total = cfg.train.total_steps;
    let mut recent = Vec::new();
    trainer.run(&data, |s| {
        recent.push(s.loss);
        if (s.step + 1) % every == 0 || s.step + 1 == total {
            let mean = recent.iter().sum::<f64>() / recent.len() as f64;
            recent.clear();
            log.push_str(&format!("{},{:.6},{:.6},{:.8}\n", s.step + 1, mean, s.grad_norm, s.lr));
            if ctx.progress {
                eprintln!("step {:>6}/{total}  loss {mean:.4}", s.step + 1);
            }
        }
    })?;
    let held_out = if test.is_empty() { None } else { Some(trainer.model.loss(&test[..test.len().min(1000)])?) };
    let mut out = Outputs::new();
    out.write(&a.out, |w| Ok(Checkpoint::from_trainer(&trainer).write(w)?))?;
    let log_path = a.out.with_file_name(format!(
        "{}.log.csv",
        a.out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    out.write_str(&log_path, &log)?;
    let final_loss = log.lines().last().and_then(|l| l.split(',').nth(1)).and_then(|v| v.parse::<f64>().ok());
    let record = json!({
        "command": "train",
        "conditioned": cfg.train.conditioned,
        "params": trainer.model.n_params(),
        "lines": data.len(),
        "dropped_lines": dropped,
        "steps": trainer.step_count(),
        "final_train_loss": final_loss,
        "test_loss": held_out,
    });
    let text = format!(
        "{} parameters, {} lines ({} too long), {} steps, train loss {}, test loss {}",
        trainer.model.n_params(),
        data.len(),
        dropped,
        trainer.step_count(),
        final_loss.map_or("NA".into(), |v| format!("{v:.4}")),
        held_out.map_or("NA".into(), |v| format!("{v:.4}"))
    );
    finish(out, &cfg, &a.out, "train", false, Report::new(record, text))
}

/// Test lines as the model sees them.
fn model_view(line: TrajectoryLine, conditioned: bool) -> TrajectoryLine {
    if conditioned {
        line
    } else {
        line.unconditioned()
    }
}

/// Continues every test day with at least four stops from its prompt.
pub fn generate_rows(
    cfg: &RunConfig,
    model: &Model<f32>,
    vocab: &BpeVocab,
    corpus: &CorpusDir,
    conditioned: bool,
) -> Result<Vec<GeneratedRow>, CliError> {
    let grammar = LineGrammar::new(vocab);
    let stop = vocab.id_of(".").ok_or_else(|| CliError::data("vocabulary lacks the final-home marker"))?;
    let sampling = cfg.sampling_config();
    let samples = cfg.sampling.samples_per_line;
    let mut rows = Vec::new();
    for (index, rec) in corpus.test.iter().enumerate() {
        let line = model_view(rec.parsed(&corpus.alphabet)?, conditioned);
        let Some(prompt) = make_prompt(&line, &corpus.alphabet) else { continue };
        let ids = vocab.tokenize(&prompt.text)?;
        let state = BodyState::after_prefix(&prompt.text)
            .ok_or_else(|| CliError::data(format!("prompt of test day {index} is not a line prefix")))?;
        for s in 0..samples {
            let mut rng = stream_rng(cfg.seed, STREAM_GENERATE + (index * samples + s) as u64);
            let mut con = grammar.constraint(state);
            let (status, text) = if ids.len() >= model.config.context_length {
                (GenStatus::Truncated, prompt.text.clone())
            } else {
                let g = sample(model, &ids, stop, &sampling, &mut rng, Some(&mut con))?;
                let text = format!("{}{}", prompt.text, vocab.detokenize(&g.ids)?);
                let status = if g.stopped {
                    match trajlang_core::corpus::parse(&text, &corpus.alphabet) {
                        Ok(_) => GenStatus::Ok,
                        Err(_) => GenStatus::Unparsable,
                    }
                } else if g.dead_end {
                    GenStatus::DeadEnd
                } else if g.truncated {
                    GenStatus::Truncated
                } else {
                    GenStatus::MaxTokens
                };
                (status, text)
            };
            rows.push(GeneratedRow {
                index,
                device_id: rec.device_id.clone(),
                date: rec.date.to_string(),
                sample: s,
                status,
                text,
            });
        }
    }
    Ok(rows)
}

pub fn generate(ctx: &Context, a: &GenerateArgs) -> Result<Report, CliError> {
    let mut cfg = ctx.config.clone();
    if let Some(n) = a.samples {
        cfg.sampling.samples_per_line = n;
    }
    if a.unconditioned {
        cfg.train.conditioned = false;
    }
    cfg.validate()?;
    let corpus = CorpusDir::load(&a.corpus)?;
    let vocab = load_vocab(&a.vocab)?;
    let model = load_model(&a.checkpoint, &vocab)?;
    let rows = generate_rows(&cfg, &model, &vocab, &corpus, cfg.train.conditioned)?;
    let ok = rows.iter().filter(|r| r.status == GenStatus::Ok).count();
    let mut out = Outputs::new();
    out.write(&a.out, |w| Ok(write_generated(w, &rows)?))?;
    let record = json!({ "command": "generate", "rows": rows.len(), "complete": ok });
    let text = format!("{} continuations, {ok} complete", rows.len());
    finish(out, &cfg, &a.out, "generate", false, Report::new(record, text))
}

fn train_days(corpus: &CorpusDir) -> Result<Vec<trajlang_core::corpus::DayTrajectory>, CliError> {
    corpus.train.iter().map(|r| r.day(&corpus.alphabet).map_err(CliError::from)).collect()
}

pub fn fit_markov(ctx: &Context, a: &FitMarkovArgs) -> Result<Report, CliError> {
    let cfg = ctx.config.clone();
    cfg.validate()?;
    let corpus = CorpusDir::load(&a.corpus)?;
    let seqs: Vec<_> = train_days(&corpus)?.iter().map(|d| resample_fixed(d, cfg.markov.step_minutes)).collect();
    let model = MarkovModel::fit(&seqs, a.order)?;
    let (n, feasible) = model.conditions().fold((0, 0), |(n, f), (c, _)| (n + 1, f + usize::from(model.is_feasible(c))));
    let mut out = Outputs::new();
    out.write(&a.out, |w| Ok(model.write(w)?))?;
    let record = json!({ "command": "fit-markov", "order": a.order, "conditions": n, "feasible": feasible });
    let text = format!("order {}: {n} conditions, {feasible} feasible", a.order);
    finish(out, &cfg, &a.out, "fit-markov", false, Report::new(record, text))
}

pub fn fit_ar(ctx: &Context, a: &FitArArgs) -> Result<Report, CliError> {
    let mut cfg = ctx.config.clone();
    if let Some(p) = a.order {
        cfg.ar.order = p;
    }
    cfg.validate()?;
    let corpus = CorpusDir::load(&a.corpus)?;
    let series: Vec<Vec<f64>> =
        train_days(&corpus)?.iter().map(|d| d.gaps().into_iter().map(f64::from).collect()).collect();
    let mut record = json!({ "command": "fit-ar" });
    let order = if cfg.ar.order == 0 {
        let table = aic_table(&series, cfg.ar.max_order)?;
        record["aic"] = json!(table.iter().map(|(p, v)| json!({ "p": p, "aic": v })).collect::<Vec<_>>());
        table.iter().fold((0, f64::INFINITY), |best, &(p, v)| if v < best.1 { (p, v) } else { best }).0
    } else {
        cfg.ar.order
    };
    let mut model = ArModel::fit(&series, order)?;
    model.noise = cfg.noise_model();
    let mut out = Outputs::new();
    out.write(&a.out, |w| Ok(model.write(w)?))?;
    record["order"] = json!(order);
    record["phi"] = json!(model.phi);
    record["residuals"] = json!(model.residuals.len());
    record["degenerate"] = json!(model.degenerate);
    let phi: Vec<String> = model.phi.iter().map(|v| format!("{v:.4}")).collect();
    let text = format!("AR({order}) phi = [{}], {} residuals", phi.join(", "), model.residuals.len());
    finish(out, &cfg, &a.out, "fit-ar", false, Report::new(record, text))
}

pub fn evaluate_cmd(ctx: &Context, a: &EvaluateArgs) -> Result<Report, CliError> {
    let cfg = ctx.config.clone();
    cfg.validate()?;
    let corpus = CorpusDir::load(&a.corpus)?;
    let generated = a.generated.as_deref().map(|p| open(p).and_then(read_generated)).transpose()?;
    let mut markov = Vec::new();
    for (name, path) in [("markov1", &a.markov1), ("markov2", &a.markov2)] {
        if let Some(p) = path {
            markov.push((name.to_string(), MarkovModel::read(open(p)?)?));
        }
    }
    let ar = a.ar.as_deref().map(|p| open(p).map_err(CliError::from).and_then(|r| Ok(ArModel::read(r)?))).transpose()?;
    let ar = ar.map(|mut m| {
        m.noise = cfg.noise_model();
        m
    });
    let inputs = EvalInputs {
        alphabet: &corpus.alphabet,
        test: &corpus.test,
        generated: generated.as_deref(),
        markov: markov.iter().map(|(n, m)| (n.clone(), m)).collect(),
        ar: ar.as_ref(),
        config: &cfg,
    };
    let (report, counts) = evaluate(&inputs)?;
    let mut out = Outputs::new();
    write_metrics(&mut out, &a.out, &report)?;
    let summary = report.summary();
    out.write_str(&a.out.join("summary.txt"), &summary)?;
    let mut rep = Report::new(json!({ "command": "evaluate" }), summary);
    rep.records = report_json(&report, &counts);
    finish(out, &cfg, &a.out, "evaluate", true, rep)
}

fn write_metrics(out: &mut Outputs, dir: &Path, report: &MetricsReport) -> Result<(), CliError> {
    fn csv_err(e: impl std::fmt::Display) -> CliError {
        CliError::data(e.to_string())
    }
    out.write(&dir.join("metrics.csv"), |w| report.write_metrics_csv(w).map_err(csv_err))?;
    out.write(&dir.join("distance_cdf.csv"), |w| {
        MetricsReport::write_cdf_csv(&report.distance_cdfs, w).map_err(csv_err)
    })?;
    out.write(&dir.join("interval_cdf.csv"), |w| {
        MetricsReport::write_cdf_csv(&report.interval_cdfs, w).map_err(csv_err)
    })?;
    Ok(())
}

fn profile_csv(table: &ProfileTable, w: &mut impl Write) -> std::io::Result<()> {
    let labels: Vec<&str> = SourceCategory::all().iter().map(|c| c.label()).collect();
    writeln!(w, "layer,{}", labels.join(","))?;
    for (l, row) in table.weights.iter().enumerate() {
        let cells: Vec<String> = (0..N_CATEGORIES)
            .map(|i| if table.present[i] { format!("{:.6}", row[i]) } else { "NA".to_string() })
            .collect();
        writeln!(w, "{},{}", l + 1, cells.join(","))?;
    }
    Ok(())
}

pub fn attention(ctx: &Context, a: &AttentionArgs) -> Result<Report, CliError> {
    let mut cfg = ctx.config.clone();
    if a.unconditioned {
        cfg.train.conditioned = false;
    }
    cfg.validate()?;
    let corpus = CorpusDir::load(&a.corpus)?;
    let vocab = load_vocab(&a.vocab)?;
    let model = load_model(&a.checkpoint, &vocab)?;
    let (mut lines, _) = encode_lines(&corpus.test, &vocab, cfg.train.conditioned, model.config.context_length)?;
    lines.truncate(cfg.eval.attention_lines);
    let profile = attention_profile(&model, &vocab, &lines)?;
    let mut out = Outputs::new();
    out.write(&a.out.join("attention_location.csv"), |w| Ok(profile_csv(&profile.location, w)?))?;
    out.write(&a.out.join("attention_interval.csv"), |w| Ok(profile_csv(&profile.interval, w)?))?;
    let table = |t: &ProfileTable| {
        json!({
            "steps": t.steps,
            "weights": t.weights.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            "uncategorized": t.uncategorized,
        })
    };
    let labels: Vec<&str> = SourceCategory::all().iter().map(|c| c.label()).collect();
    let record = json!({
        "command": "attention",
        "lines": lines.len(),
        "categories": labels,
        "aggregation": profile.aggregation,
        "location": table(&profile.location),
        "interval": table(&profile.interval),
    });
    let mut text = String::new();
    for (name, t) in [("location", &profile.location), ("interval", &profile.interval)] {
        text.push_str(&format!("{name} steps: {}\n{:<6}", t.steps, "layer"));
        for l in &labels {
            text.push_str(&format!("{l:>9}"));
        }
        text.push('\n');
        for (i, row) in t.weights.iter().enumerate() {
            text.push_str(&format!("{:<6}", i + 1));
            for v in row {
                text.push_str(&format!("{v:>9.4}"));
            }
            text.push('\n');
        }
    }
    finish(out, &cfg, &a.out, "attention", true, Report::new(record, text))
}

/// Paths of a smoke run below its root.
pub struct SmokeLayout {
    pub synth: PathBuf,
    pub corpus: PathBuf,
    pub vocab: PathBuf,
    pub checkpoint: PathBuf,
    pub generated: PathBuf,
    pub markov1: PathBuf,
    pub markov2: PathBuf,
    pub ar: PathBuf,
    pub eval: PathBuf,
    pub attention: PathBuf,
}

impl SmokeLayout {
    pub fn new(root: &Path) -> Self {
        Self {
            synth: root.join("synth"),
            corpus: root.join("corpus"),
            vocab: root.join("vocab.txt"),
            checkpoint: root.join("model.ckpt"),
            generated: root.join("generated.tsv"),
            markov1: root.join("markov1.txt"),
            markov2: root.join("markov2.txt"),
            ar: root.join("ar.txt"),
            eval: root.join("eval"),
            attention: root.join("attention"),
        }
    }
}

pub fn smoke(ctx: &Context, a: &SmokeArgs) -> Result<Report, CliError> {
    ctx.config.validate()?;
    let p = SmokeLayout::new(&a.out);
    let steps: Vec<Report> = vec![
        synth(ctx, &SynthArgs { out: p.synth.clone(), agents: None, days: None })?,
        build_corpus_cmd(
            ctx,
            &BuildCorpusArgs {
                pings: p.synth.join("pings.csv"),
                environment: p.synth.join("environment.csv"),
                out: p.corpus.clone(),
                unconditioned: false,
            },
        )?,
        train_bpe_cmd(ctx, &TrainBpeArgs { corpus: p.corpus.clone(), out: p.vocab.clone(), vocab_size: None })?,
        train(
            ctx,
            &TrainArgs {
                corpus: p.corpus.clone(),
                vocab: p.vocab.clone(),
                out: p.checkpoint.clone(),
                steps: None,
                unconditioned: false,
            },
        )?,
        generate(
            ctx,
            &GenerateArgs {
                corpus: p.corpus.clone(),
                vocab: p.vocab.clone(),
                checkpoint: p.checkpoint.clone(),
                out: p.generated.clone(),
                samples: None,
                unconditioned: false,
            },
        )?,
        fit_markov(ctx, &FitMarkovArgs { corpus: p.corpus.clone(), order: 1, out: p.markov1.clone() })?,
        fit_markov(ctx, &FitMarkovArgs { corpus: p.corpus.clone(), order: 2, out: p.markov2.clone() })?,
        fit_ar(ctx, &FitArArgs { corpus: p.corpus.clone(), out: p.ar.clone(), order: None })?,
        evaluate_cmd(
            ctx,
            &EvaluateArgs {
                corpus: p.corpus.clone(),
                generated: Some(p.generated.clone()),
                markov1: Some(p.markov1.clone()),
                markov2: Some(p.markov2.clone()),
                ar: Some(p.ar.clone()),
                out: p.eval.clone(),
            },
        )?,
        attention(
            ctx,
            &AttentionArgs {
                corpus: p.corpus.clone(),
                vocab: p.vocab.clone(),
                checkpoint: p.checkpoint.clone(),
                out: p.attention.clone(),
                unconditioned: false,
            },
        )?,
    ];
    let mut all = Report::default();
    for r in steps {
        all.records.extend(r.records);
        all.text.push_str(&r.text);
        if !r.text.ends_with('\n') {
            all.text.push('\n');
        }
        all.outputs.extend(r.outputs);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_code_strings() {
        let c = parse_code("53-39-4-6-1-1").unwrap();
        assert_eq!(c.level(), 3);
        assert_eq!(c.to_string(), "53-39-4-6-1-1");
        assert_eq!(parse_code("53-39-4-6-1-1-3-2").unwrap().level(), 5);
        for bad in ["53", "53-39-9-0", "a-b", "53-39-4-6-1-1-5", ""] {
            assert!(parse_code(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn snapshot_names() {
        assert_eq!(snapshot_path(Path::new("o/m.ckpt"), "train", false), PathBuf::from("o/m.ckpt.config.toml"));
        assert_eq!(snapshot_path(Path::new("o"), "synth", true), PathBuf::from("o/synth.config.toml"));
    }
}
