use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Clone, Parser)]
#[command(name = "trajlang", version, about = "Trajectory language pipeline: synthesize, encode, train, generate, evaluate")]
pub struct Cli {
    /// TOML run configuration; unspecified keys keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print summaries as JSON lines.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate a synthetic population and write pings and environment CSVs.
    Synth(SynthArgs),
    /// Validate and clean a ping CSV.
    Ingest(IngestArgs),
    /// Encode a coordinate as a mesh code (and a cell string given an alphabet).
    Encode(EncodeArgs),
    /// Decode a mesh code or cell string to its centre.
    Decode(DecodeArgs),
    /// Infer homes, segment days, serialize lines and split by device.
    BuildCorpus(BuildCorpusArgs),
    /// Learn BPE merges on the training lines.
    TrainBpe(TrainBpeArgs),
    /// Train the transformer.
    Train(TrainArgs),
    /// Continue every eligible test line from its four-stop prompt.
    Generate(GenerateArgs),
    /// Fit a Markov chain on half-hour resampled training days.
    FitMarkov(FitMarkovArgs),
    /// Fit the autoregressive interval model.
    FitAr(FitArArgs),
    /// Hit rates, MALE, distance and interval distributions.
    Evaluate(EvaluateArgs),
    /// Per-layer attention mass by token category.
    Attention(AttentionArgs),
    /// Run the whole pipeline into one directory.
    Smoke(SmokeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub agents: Option<usize>,
    #[arg(long)]
    pub days: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub pings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EncodeArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub lat: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub lon: f64,
    #[arg(long, default_value_t = 5)]
    pub level: u8,
    /// Alphabet sidecar; prints the cell string of the level-5 cell.
    #[arg(long)]
    pub alphabet: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DecodeArgs {
    /// Hyphen-separated mesh indices.
    #[arg(long, conflicts_with = "cell", required_unless_present = "cell")]
    pub code: Option<String>,
    /// Cell string; needs `--alphabet`.
    #[arg(long, requires = "alphabet")]
    pub cell: Option<String>,
    #[arg(long)]
    pub alphabet: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BuildCorpusArgs {
    #[arg(long)]
    pub pings: PathBuf,
    #[arg(long)]
    pub environment: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Leave out environment and attribute tokens.
    #[arg(long)]
    pub unconditioned: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainBpeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub vocab_size: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<u64>,
    /// Strip conditioning prefixes before training.
    #[arg(long)]
    pub unconditioned: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Prompt without conditioning prefixes.
    #[arg(long)]
    pub unconditioned: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FitMarkovArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FitArArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Lag order; 0 selects by AIC.
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output of `generate`.
    #[arg(long)]
    pub generated: Option<PathBuf>,
    #[arg(long)]
    pub markov1: Option<PathBuf>,
    #[arg(long)]
    pub markov2: Option<PathBuf>,
    #[arg(long)]
    pub ar: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AttentionArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub unconditioned: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SmokeArgs {
    #[arg(long)]
    pub out: PathBuf,
}
