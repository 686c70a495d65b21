mod artifacts;
mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use artifacts::{InvalidArtifact, MissingArtifact};
use toxcf::baselines::Baseline;

#[derive(Parser, Debug)]
#[command(
    name = "toxcf",
    version,
    about = "Toxicity prediction for user-subreddit pairs with matrix factorization"
)]
pub struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every stochastic stage (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory holding all stage artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic scored corpus with planted structure.
    Synth(SynthArgs),
    /// Drop low-activity subreddits and generic comments.
    Filter(FilterArgs),
    /// Label (user, subreddit) interactions and index them.
    Aggregate(AggregateArgs),
    /// Partition interactions into train/validation/test.
    Split(SplitArgs),
    /// Train matrix factorization models.
    Train(TrainArgs),
    /// Search hyperparameters on the validation partition.
    Grid(GridArgs),
    /// Score the models and baselines on the test partition.
    Evaluate(EvaluateArgs),
    /// Render the comparison table and the toxicity histogram.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON generator specification.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub subs: Option<usize>,
    #[arg(long)]
    pub d_true: Option<usize>,
    #[arg(long)]
    pub toxic_rate: Option<f64>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub min_comments: Option<usize>,
    #[arg(long)]
    pub max_comments: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    /// Scored comments (JSONL); defaults to the synth output.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Subreddits with at most this many distinct authors are dropped.
    #[arg(long)]
    pub min_users: Option<usize>,
    /// Size of the popular-word lists.
    #[arg(long)]
    pub popular_k: Option<usize>,
    /// Health keyword file, one per line.
    #[arg(long)]
    pub keywords: Option<PathBuf>,
    /// Fail on the first malformed line instead of skipping it.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug)]
pub struct AggregateArgs {
    /// Filtered comments (JSONL); defaults to the filter output.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Only hold out a test partition.
    #[arg(long)]
    pub no_validation: bool,
}

#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    /// JSON training configuration, e.g. the best_config.json written by `grid`.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub es_tolerance: Option<f64>,
    #[arg(long)]
    pub es_patience: Option<usize>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Number of models, seeded consecutively from --seed.
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub lrs: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub l2s: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub batch_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Baselines to score (repeatable); all by default.
    #[arg(long, value_parser = parse_baseline)]
    pub baseline: Vec<Baseline>,
    /// Seeded repetitions of each baseline.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Also report accuracy, precision, F1 and ROC AUC.
    #[arg(long)]
    pub all_metrics: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Histogram bins for mean interaction toxicity.
    #[arg(long)]
    pub bins: Option<usize>,
}

fn parse_baseline(s: &str) -> Result<Baseline, String> {
    s.parse().map_err(|e: toxcf::Error| e.to_string())
}

/// 2 for data or configuration that breaks an invariant, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InvalidArtifact>() {
            return 2;
        }
        if cause.is::<MissingArtifact>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<toxcf::Error>() {
            return match e {
                toxcf::Error::Io { .. } | toxcf::Error::Diverged { .. } => 1,
                toxcf::Error::Csv(c) if c.is_io_error() => 1,
                toxcf::Error::Json(j) if j.is_io() => 1,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<serde_json::Error>() {
            return if e.is_io() { 1 } else { 2 };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match stages::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
