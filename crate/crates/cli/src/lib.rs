//! `rewardnet`: generate network pools, train machine players, run the
//! agent-based grids and scripted experiments, analyze them, and serve the
//! live session API.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod server;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rewardnet_core::abm::SelectionMode;
use rewardnet_core::strategies::RuleKind;

pub use commands::run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub(crate) fn runtime(e: impl Into<anyhow::Error>) -> Self {
        CliError::Runtime(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "rewardnet", version, about = "Reward-network transmission experiments")]
pub struct Cli {
    /// Root for default output directories.
    #[arg(long, global = true, env = "REWARDNET_OUT", default_value = "out")]
    pub out_root: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate training, validation and experiment pools.
    Gen(GenArgs),
    /// Score a pool with a rule-based player.
    Score(ScoreArgs),
    /// Train a machine player.
    Train(TrainArgs),
    /// Run the agent-based simulation over a parameter grid.
    Abm(AbmArgs),
    /// Run a transmission-chain experiment with scripted learners.
    Experiment(ExperimentArgs),
    /// Classify, aggregate and export finished experiment runs.
    Analyze(AnalyzeArgs),
    /// Serve the live session API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config; defaults are used (and written beside the outputs) when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory [default: <out-root>/<subcommand>].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Networks per pool.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Pool file written by `gen`.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(RuleKind))]
    pub policy: RuleKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory holding training.jsonl and validation.jsonl.
    #[arg(long)]
    pub pools: PathBuf,
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AbmArgs {
    #[command(flatten)]
    pub common: Common,
    /// Reproduce a figure's grid (only 4 exists).
    #[arg(long)]
    pub figure: Option<u32>,
    /// `default` or a TOML file with `discovery` and `transmission` axes.
    #[arg(long)]
    pub grid: Option<String>,
    /// Replications per cell.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Also run the one-machine, 16-agent and all-candidate variants.
    #[arg(long)]
    pub sensitivity: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub common: Common,
    /// Scripted learner copy fidelity, as `f=<value>`.
    #[arg(long, default_value = "f=1")]
    pub scripted: String,
    /// Total populations, split evenly between the two conditions.
    #[arg(long)]
    pub populations: Option<usize>,
    /// Directory holding experiment.jsonl.
    #[arg(long)]
    pub pools: PathBuf,
    /// Machine checkpoints, in order.
    #[arg(long, num_args = 1..)]
    pub machines: Vec<PathBuf>,
    #[arg(long)]
    pub discovery: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(SelectionMode))]
    pub selection: Option<SelectionMode>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Output directory of an `experiment` run.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Directory for the tidy tables [default: <out-root>/analyze].
    #[arg(long)]
    pub export: Option<PathBuf>,
    /// Drop generations before this one from the tidy tables.
    #[arg(long, default_value_t = 0)]
    pub from_generation: usize,
    /// CSV of coded strategy flags (population, generation, seat, flag).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory holding experiment.jsonl.
    #[arg(long)]
    pub pools: PathBuf,
    #[arg(long, num_args = 1..)]
    pub machines: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
