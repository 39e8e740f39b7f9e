//! Pipeline orchestration behind the `trajlang` binary.

use std::path::{Path, PathBuf};

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod output;
pub mod probe;

pub use args::{Cli, Command};
pub use commands::Context;
pub use config::RunConfig;
pub use error::{CliError, ErrorKind};

/// What a command did: machine-readable records plus a human summary.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub records: Vec<serde_json::Value>,
    pub text: String,
    pub outputs: Vec<PathBuf>,
}

impl Report {
    pub fn new(record: serde_json::Value, text: impl Into<String>) -> Self {
        Self { records: vec![record], text: text.into(), outputs: Vec::new() }
    }
}

/// Defaults, then the config file, then the seed override. `smoke` starts
/// from the small preset when no file is given.
pub fn resolve_config(path: Option<&Path>, seed: Option<u64>, smoke: bool) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None if smoke => RunConfig::smoke(),
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(ctx: &Context, command: &Command) -> Result<Report, CliError> {
    use commands::*;
    match command {
        Command::Synth(a) => synth(ctx, a),
        Command::Ingest(a) => ingest_cmd(ctx, a),
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::BuildCorpus(a) => build_corpus_cmd(ctx, a),
        Command::TrainBpe(a) => train_bpe_cmd(ctx, a),
        Command::Train(a) => train(ctx, a),
        Command::Generate(a) => generate(ctx, a),
        Command::FitMarkov(a) => fit_markov(ctx, a),
        Command::FitAr(a) => fit_ar(ctx, a),
        Command::Evaluate(a) => evaluate_cmd(ctx, a),
        Command::Attention(a) => attention(ctx, a),
        Command::Smoke(a) => smoke(ctx, a),
    }
}

pub fn run(cli: &Cli) -> Result<Report, CliError> {
    let smoke = matches!(cli.command, Command::Smoke(_));
    let config = resolve_config(cli.config.as_deref(), cli.seed, smoke)?;
    let ctx = Context { config, progress: !cli.json };
    execute(&ctx, &cli.command)
}
