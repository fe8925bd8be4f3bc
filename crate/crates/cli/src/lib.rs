//! `faultiso`: train a PCA monitoring model, flag faulty samples, isolate
//! the responsible variables under a structured sparsity penalty, and
//! generate the fifteen-variable benchmark.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 nothing flagged,
//! 4 solver hit its iteration cap (report still written).

pub mod error;
mod io;
mod isolate;
pub mod manifest;
mod monitor;
mod simulate;
mod train;
#[cfg(test)]
mod test_support;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fault_isolation::monitor::{StatisticKind, DEFAULT_SIGNIFICANCE, DEFAULT_VARIANCE_TARGET};
use fault_isolation::solver::{DEFAULT_EPSILON, DEFAULT_MAX_ITER, DEFAULT_RHO};
use fault_isolation::structure::Family;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "faultiso", version, about = "Structured-sparsity fault isolation for PCA process monitoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit scaling, PCA and control limits on fault-free data.
    Train(TrainArgs),
    /// Compute T² and SPE for every sample and flag limit violations.
    Monitor(MonitorArgs),
    /// Estimate the sparse fault vector of the flagged samples.
    Isolate(IsolateArgs),
    /// Generate the fifteen-variable benchmark with an optional fault.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Fault-free training CSV (header row of variable names).
    #[arg(long)]
    pub input: PathBuf,
    /// Model file to write (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Keep the fewest components reaching this explained-variance fraction.
    #[arg(long, default_value_t = DEFAULT_VARIANCE_TARGET, conflicts_with = "components")]
    pub variance_target: f64,
    /// Keep exactly this many components.
    #[arg(long)]
    pub components: Option<usize>,
    /// Control-limit significance level.
    #[arg(long, default_value_t = DEFAULT_SIGNIFICANCE)]
    pub significance: f64,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Samples to monitor (CSV, same columns as training).
    #[arg(long)]
    pub input: PathBuf,
    /// Per-sample statistic report (CSV).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Lasso,
    Support,
    Group,
    SparseGroup,
    Cluster,
    Tree,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Lasso => Family::Lasso,
            FamilyArg::Support => Family::PartialSupport,
            FamilyArg::Group => Family::GroupLasso,
            FamilyArg::SparseGroup => Family::SparseGroupLasso,
            FamilyArg::Cluster => Family::Clustered,
            FamilyArg::Tree => Family::Tree,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatisticArg {
    T2,
    Spe,
}

impl From<StatisticArg> for StatisticKind {
    fn from(s: StatisticArg) -> Self {
        match s {
            StatisticArg::T2 => StatisticKind::T2,
            StatisticArg::Spe => StatisticKind::Spe,
        }
    }
}

#[derive(Debug, Args)]
pub struct IsolateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Samples to screen; only flagged ones are isolated.
    #[arg(long)]
    pub input: PathBuf,
    /// Structure descriptor (JSON) for the structured families.
    #[arg(long)]
    pub structure: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    /// Fixed regularization weight; skips selection.
    #[arg(long, conflicts_with_all = ["lambda_grid", "grid_points"])]
    pub lambda: Option<f64>,
    /// Comma-separated candidate weights for selection.
    #[arg(long, value_delimiter = ',', num_args = 1.., conflicts_with = "grid_points")]
    pub lambda_grid: Option<Vec<f64>>,
    /// Points of the default grid inside the theoretical interval.
    #[arg(long, default_value_t = 10)]
    pub grid_points: usize,
    /// Sparse-group mixing weight (share of the elementwise term).
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    /// Singleton weight outside the clusters; defaults to the cluster weight.
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    pub rho: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Statistic to reconstruct; defaults to SPE when any flagged sample
    /// violates it, T² otherwise.
    #[arg(long, value_enum)]
    pub statistic: Option<StatisticArg>,
    /// Isolate every flagged sample on its own and vote.
    #[arg(long)]
    pub per_sample: bool,
    /// Fraction of per-sample runs a variable must be active in.
    #[arg(long, default_value_t = 0.5, requires = "per_sample")]
    pub quorum: f64,
    /// Contribution report (CSV). A JSON summary is written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Selection path table (CSV), pooled mode only.
    #[arg(long, conflicts_with = "per_sample")]
    pub path_out: Option<PathBuf>,
    /// Print a text bar chart of the contributions.
    #[arg(long)]
    pub bars: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    None,
    SensorBias,
    Multiplicative,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FaultArg::None)]
    pub fault: FaultArg,
    #[arg(long, default_value_t = 700)]
    pub n_train: usize,
    #[arg(long, default_value_t = 300)]
    pub n_test: usize,
    /// First faulty test row (0-based).
    #[arg(long, default_value_t = 100)]
    pub fault_start: usize,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => train::run(&a),
        Command::Monitor(a) => monitor::run(&a),
        Command::Isolate(a) => isolate::run(&a),
        Command::Simulate(a) => simulate::run(&a),
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run_from<I, T>(argv: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}
