use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "smpl",
    version,
    about = "Train and compare single-model meta pseudo-label classifiers on toy data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configured training job and write its artifacts.
    Train(TrainArgs),
    /// Run several presets over a range of seeds and summarize accuracy.
    Compare(CompareArgs),
    /// Evaluate a checkpoint on a 2-D grid for decision-boundary plots.
    ExportBoundary(ExportBoundaryArgs),
    /// Convert a run's stored trajectory snapshots to CSV.
    ExportTrajectory(ExportTrajectoryArgs),
    /// Print the parameter-copy accounting of the single- and two-model trainers.
    MemoryReport(MemoryReportArgs),
}

/// Where the experiment description comes from.
#[derive(Debug, Clone, Args)]
pub struct ConfigSource {
    /// TOML experiment file.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Embedded preset name.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Dotted-path override applied after loading, e.g. `losses.lambda=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: ConfigSource,
    /// Seed for data, initialisation, dropout and batching. Falls back to
    /// `SMPL_SEED`, then to the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: runs/<name>-seed<seed>].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Presets or config paths. Deltas are reported as first minus each other.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub presets: Vec<String>,
    /// Number of consecutive seeds per preset.
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    /// First seed of the range. Falls back to `SMPL_SEED`, then 0.
    #[arg(long)]
    pub first_seed: Option<u64>,
    /// Concurrent runs [default: available cores].
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Override applied to every preset.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Directory for per-run metrics and the summary; nothing is written without it.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Print the summary as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ExportBoundaryArgs {
    /// Checkpoint of a model with two inputs.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Grid extent as `x_min,x_max,y_min,y_max`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
          default_values_t = [-1.5, 2.5, -1.0, 1.5])]
    pub bounds: Vec<f64>,
    /// Points per axis; the grid has resolution^2 rows.
    #[arg(long, default_value_t = 200)]
    pub resolution: usize,
    /// Output CSV [default: stdout].
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportTrajectoryArgs {
    /// Directory written by `smpl train`.
    pub run_dir: PathBuf,
    /// Output CSV [default: stdout].
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MemoryReportArgs {
    /// Defaults to the moons-smpl preset when neither flag is given.
    #[command(flatten)]
    pub source: ConfigSource,
    /// Emit JSON.
    #[arg(long)]
    pub json: bool,
}
