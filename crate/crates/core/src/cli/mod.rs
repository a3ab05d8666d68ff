//! Command-line front end. Every command resolves its settings from
//! defaults, an optional config file and flags, writes the resolved settings
//! next to its outputs and maps failures onto stable exit codes.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{visualize_artifact, RESOLVED_CONFIG, RUN_MANIFEST};
pub use config::Settings;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] crate::Error),
    /// The command ran but its check did not pass.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) | CliError::Failed(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "morphtext", version, about = "Deep morphological opening/closing for text-segment maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Config file with global keys and one [section] per command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives the reference single-threaded path.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Any settings key, as KEY=VALUE; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic train/test corpus.
    Generate(GenerateArgs),
    /// Train structuring elements on a corpus.
    Train(TrainArgs),
    /// Score pipeline variants on a corpus.
    Eval(EvalArgs),
    /// Finite-difference check of the block gradients.
    Gradcheck(GradcheckArgs),
    /// Structuring-element size or depth sweep.
    Sweep(SweepArgs),
    /// Render checkpoints or maps as PGM images.
    Visualize(VisualizeArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub test_count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// dmop, dmcl or both.
    #[arg(long)]
    pub block: Option<String>,
    /// SE size of the selected block, e.g. 3x3.
    #[arg(long)]
    pub se: Option<String>,
    /// Layers per half of the selected block.
    #[arg(long)]
    pub layers: Option<usize>,
    /// sgd or adam.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// none, op, cl or opcl.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Score every variant instead of baseline and trained rows.
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// dmop or dmcl.
    #[arg(long)]
    pub block: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Flip the sign of the backward pass; the check must then fail.
    #[arg(long)]
    pub corrupt_backward: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Block whose shape varies: dmop or dmcl.
    #[arg(long)]
    pub target: Option<String>,
    /// Comma-separated SE sizes.
    #[arg(long)]
    pub sizes: Option<String>,
    /// Comma-separated depths.
    #[arg(long)]
    pub layers: Option<String>,
    #[arg(long)]
    pub repetitions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint directory or map file.
    pub artifact: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Messages go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
