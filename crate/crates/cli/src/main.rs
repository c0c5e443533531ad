//! `amc`: find and render audio match cuts from the command line.
//!
//! The pipeline is a sequence of file-to-file steps: `segment` cuts WAVs
//! into 1-second frames, `featurize` turns frames into a feature file,
//! `query` ranks frames against a query (optionally rendering transitions),
//! `render` joins two clips, `train` fits a projection head and `eval`
//! scores rankings against relevance labels.

mod commands;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use amc_core::dsp::{FeatureKind, DEFAULT_MEL_BINS, DEFAULT_N_MFCC};
use amc_core::transition::{PlanConfig, Strategy};

#[derive(Parser, Debug)]
#[command(name = "amc", version, about = "Audio match cut retrieval and rendering")]
struct Cli {
    /// Worker threads for parallel steps (default: all cores).
    #[arg(long, global = true, env = "AMC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Cut WAV files into 1-second frames and write a manifest.
    Segment(SegmentArgs),
    /// Compute a feature file for every frame of a manifest.
    Featurize(FeaturizeArgs),
    /// Rank gallery frames against a query frame.
    Query(QueryArgs),
    /// Join two clips with a transition.
    Render(RenderArgs),
    /// Train a projection head on consecutive frames.
    Train(TrainArgs),
    /// Score retrieval against relevance labels.
    Eval(EvalArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum CorpusKind {
    /// Tone families with relevance labels.
    Retrieval,
    /// Slowly evolving sequences for training.
    Training,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "retrieval")]
    kind: CorpusKind,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of training sequences.
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Seconds per training sequence.
    #[arg(long, default_value_t = 10)]
    frames: usize,
}

#[derive(Args, Debug)]
struct SegmentArgs {
    /// WAV files or directories of WAV files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct FeatureArgs {
    /// Base feature: flattened log-Mel or MFCC.
    #[arg(long, default_value = "mel")]
    kind: FeatureKind,
    #[arg(long, default_value_t = DEFAULT_MEL_BINS)]
    mel_bins: usize,
    #[arg(long, default_value_t = DEFAULT_N_MFCC)]
    n_mfcc: usize,
    /// Projection head checkpoint; without one features are only normalized.
    #[arg(long)]
    head: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FeaturizeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Args, Debug, Clone)]
struct PlanArgs {
    #[arg(long, default_value = "max-ss-adaptive")]
    strategy: Strategy,
    #[arg(long, default_value_t = 8.0)]
    phi: f64,
    /// Fade length for the fixed crossfade strategy, seconds.
    #[arg(long, default_value_t = 0.25)]
    fixed_s: f64,
    #[arg(long, default_value_t = 0.05)]
    l_min: f64,
    #[arg(long, default_value_t = 1.0)]
    l_max: f64,
    /// Compare log-Mel instead of power Mel columns when locating the cut.
    #[arg(long)]
    log_similarity: bool,
}

impl PlanArgs {
    fn config(&self, mel_bins: usize) -> PlanConfig {
        PlanConfig {
            phi: self.phi,
            fixed_s: self.fixed_s,
            l_min: self.l_min,
            l_max: self.l_max,
            mel_bins,
            log_similarity: self.log_similarity,
        }
    }
}

#[derive(Args, Debug)]
struct QueryArgs {
    /// Gallery feature file.
    #[arg(long)]
    features: PathBuf,
    /// Frame id of the query (must be in the gallery).
    #[arg(long, conflicts_with = "query_wav", required_unless_present = "query_wav")]
    query_id: Option<String>,
    /// WAV whose first second is the query.
    #[arg(long)]
    query_wav: Option<PathBuf>,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    /// Keep frames from the query's own source in the ranking.
    #[arg(long)]
    include_same_source: bool,
    /// Ranked JSON destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Render a transition into each candidate, one WAV per rank.
    #[arg(long, requires = "manifest")]
    render_dir: Option<PathBuf>,
    /// Manifest used to locate frame audio for rendering.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    features_cfg: FeatureArgs,
    #[command(flatten)]
    plan: PlanArgs,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long = "query")]
    query: PathBuf,
    #[arg(long = "match")]
    matched: PathBuf,
    /// Start of the query frame within its file, seconds.
    #[arg(long, default_value_t = 0.0)]
    query_offset: f64,
    /// Start of the matched frame within its file, seconds.
    #[arg(long, default_value_t = 0.0)]
    match_offset: f64,
    #[arg(long)]
    out: PathBuf,
    /// Plan JSON destination (default: next to the output WAV).
    #[arg(long)]
    plan_out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MEL_BINS)]
    mel_bins: usize,
    #[command(flatten)]
    plan: PlanArgs,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Checkpoint destination.
    #[arg(long)]
    out: PathBuf,
    /// Loss log destination (default: `<out>.loss.jsonl`).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Frames per training sequence.
    #[arg(long, default_value_t = 10)]
    seq_len: usize,
    #[arg(long, default_value_t = amc_core::embedding::DEFAULT_DIM)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = amc_core::embedding::DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "mel")]
    kind: FeatureKind,
    #[arg(long, default_value_t = DEFAULT_MEL_BINS)]
    mel_bins: usize,
    #[arg(long, default_value_t = DEFAULT_N_MFCC)]
    n_mfcc: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    features: PathBuf,
    /// Relevance labels, JSON lines `{query_id, gallery_id, relevance}`.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10])]
    ks: Vec<usize>,
    /// Report destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Score seeded random rankings instead of the features.
    #[arg(long)]
    random: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring thread pool")?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Segment(a) => commands::segment(&a),
        Command::Featurize(a) => commands::featurize(&a),
        Command::Query(a) => commands::query(&a),
        Command::Render(a) => commands::render(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
    }
}
