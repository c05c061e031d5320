use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "qasynth", version, about = "Narrative and rationale synthesis for VideoQA corpora")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand. Unset values fall back to the
/// environment, then the config file, then built-in defaults.
#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true, env = "QASYNTH_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "QASYNTH_SEED")]
    pub seed: Option<u64>,
    /// `mock:<replay.json>`, `replay:<replay.json>`, `http`, or `record:<replay.json>`.
    #[arg(long, global = true, env = "QASYNTH_BACKEND")]
    pub backend: Option<String>,
    #[arg(long, global = true, env = "QASYNTH_MODEL")]
    pub model: Option<String>,
    /// Maximum backend calls in flight.
    #[arg(long, global = true, env = "QASYNTH_CONCURRENCY")]
    pub concurrency: Option<usize>,
    #[arg(long, global = true, env = "QASYNTH_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Directory receiving every output, manifest and config snapshot.
    #[arg(long, global = true, env = "QASYNTH_RUN_DIR")]
    pub run_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "QASYNTH_LOG_LEVEL")]
    pub log_level: Option<String>,
    /// Treat partially failed synthesis runs as errors.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Validate a QA file and write it in canonical form.
    Ingest(IngestArgs),
    /// Per-dataset video and QA counts with histograms.
    Stats(StatsArgs),
    /// Generate one narrative per question group.
    SynthQbp(SynthArgs),
    /// Generate one rationale per QA pair.
    SynthQbc(SynthArgs),
    /// Run quality checks and filter synthesized records.
    Qc(QcArgs),
    /// Assemble narratives and rationales into a training file.
    Emit(EmitArgs),
    /// Seeded subsets of a sample file.
    Subset(SubsetArgs),
    /// Concatenate and shuffle several sample files.
    Mix(MixArgs),
    /// Exact-match accuracy of a prediction file.
    Score(ScoreArgs),
    /// Train-source by test-target accuracy grid.
    Matrix(MatrixArgs),
    /// Plateau steps and speedup between training curves.
    Convergence(ConvergenceArgs),
    /// Sample items for human evaluation and issue rater tokens.
    EvalSample(EvalSampleArgs),
    /// Serve the rating API (and optionally the rater UI).
    ServeReview(ServeArgs),
    /// Mean and population std per (method, dimension).
    EvalAggregate(EvalAggregateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    pub input: PathBuf,
    /// Expected dataset id; records naming another dataset are rejected.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Print CSV instead of the table.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Canonical corpus file.
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory with templates and templates.lock; defaults to the built-in set.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Resume or name a specific job.
    #[arg(long)]
    pub job_id: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_attempts: Option<u32>,
    /// JSON object of video id to total frame count.
    #[arg(long)]
    pub frame_counts: Option<PathBuf>,
    /// Drop repeated question/answer pairs from each group's prompt.
    #[arg(long)]
    pub dedup_pairs: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct QcArgs {
    #[arg(long)]
    pub narratives: Option<PathBuf>,
    #[arg(long)]
    pub rationales: Option<PathBuf>,
    /// Corpus holding the narratives' source groups.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// drop_fail, drop_fail_and_warn or keep_all.
    #[arg(long, default_value = "drop_fail")]
    pub policy: String,
}

#[derive(Debug, Args, Serialize)]
pub struct EmitArgs {
    #[arg(long)]
    pub narratives: Option<PathBuf>,
    #[arg(long)]
    pub rationales: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SubsetArgs {
    /// Sample file written by `emit` or `mix`.
    pub samples: PathBuf,
    #[arg(long = "size", required = true)]
    pub sizes: Vec<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct MixArgs {
    /// `NAME=samples.jsonl`, repeatable.
    #[arg(long = "source", required = true)]
    pub sources: Vec<String>,
    /// Comma-separated dataset names in concatenation order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub recipe: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    pub predictions: PathBuf,
    #[arg(long, default_value = "unspecified")]
    pub train_source: String,
    /// Defaults to the dataset named by the predictions.
    #[arg(long)]
    pub test_target: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MatrixArgs {
    /// Accuracy report files written by `score`.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub baseline: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct ConvergenceArgs {
    /// `NAME=log.csv`, repeatable. Logs hold `step,accuracy` lines.
    #[arg(long = "series", required = true)]
    pub series: Vec<String>,
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, default_value_t = qasynth::evalharness::DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = qasynth::evalharness::DEFAULT_DELTA)]
    pub delta: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalSampleArgs {
    #[arg(long)]
    pub narratives: PathBuf,
    #[arg(long)]
    pub rationales: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n_per_method: usize,
    #[arg(long, value_delimiter = ',', default_value = "rater-1,rater-2,rater-3")]
    pub evaluators: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub raters_per_item: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub items: PathBuf,
    /// JSON object of bearer token to evaluator id.
    #[arg(long)]
    pub tokens: PathBuf,
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Directory with the rater UI bundle.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalAggregateArgs {
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub ratings: PathBuf,
}
