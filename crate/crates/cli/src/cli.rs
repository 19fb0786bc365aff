use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use snowgrow_core::phase1::{Strategy, DEFAULT_MAX_STEPS};
use snowgrow_core::phase2::AttemptModel;

#[derive(Debug, Parser)]
#[command(name = "snowgrow", version, about = "Monte Carlo driver for snowflake, snowball and lattice growth")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Flat key=value file supplying defaults; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time to grow one target-size snowflake.
    Phase1(Phase1Args),
    /// Optimize a snowball schedule and sample builds with it.
    Snowball(SnowballArgs),
    /// Bond percolation of a snowball lattice.
    Lattice(LatticeArgs),
    /// Check the graph measurement rules against the stabilizer oracle.
    VerifyOracle(VerifyArgs),
    /// Sweep p_s and fit a metric against log2(1/p_s).
    Sweep(SweepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Phase1(_) => "phase1",
            Command::Snowball(_) => "snowball",
            Command::Lattice(_) => "lattice",
            Command::VerifyOracle(_) => "verify-oracle",
            Command::Sweep(_) => "sweep",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Trials per configuration.
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trial CSV path; the summary goes next to it as <stem>.summary.csv.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Also write an SVG plot as <stem>.svg.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Args)]
pub struct Phase1Args {
    /// Success probabilities, comma separated.
    #[arg(long = "p", alias = "p-s", value_delimiter = ',', default_value = "0.25", allow_negative_numbers = true)]
    pub p: Vec<f64>,
    #[arg(long, default_value = "buffer", value_parser = parse_strategy)]
    pub strategy: Strategy,
    /// Device sizes, comma separated; defaults to the strategy minimum.
    #[arg(long, value_delimiter = ',')]
    pub device_qubits: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    pub max_steps: u64,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SnowballArgs {
    #[arg(long = "p", alias = "p-s", value_delimiter = ',', default_value = "0.03125", allow_negative_numbers = true)]
    pub p: Vec<f64>,
    #[arg(long, default_value = "burst", value_parser = parse_model)]
    pub model: AttemptModel,
    /// Required expected final size, in units of 1/p_s.
    #[arg(long, default_value_t = 4.07)]
    pub target: f64,
    /// Fixed per-level budgets instead of the optimized schedule.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub budgets: Option<Vec<usize>>,
    /// Sample only successful builds (each fusion conditioned on success).
    #[arg(long)]
    pub conditioned: bool,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LatticeMode {
    /// Bond map only.
    Statistical,
    /// Every qubit simulated; grids up to 4x4.
    FullGraph,
}

#[derive(Debug, Clone, Args)]
pub struct LatticeArgs {
    #[arg(long, default_value_t = 50)]
    pub width: usize,
    #[arg(long, default_value_t = 50)]
    pub height: usize,
    #[arg(long = "p", alias = "p-s", value_delimiter = ',', default_value = "0.001", allow_negative_numbers = true)]
    pub p: Vec<f64>,
    /// Qubits per snowball; defaults to floor(4.07 / p_s).
    #[arg(long)]
    pub snowball_size: Option<usize>,
    /// Bond probabilities to use directly, bypassing p_s.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub bond_prob: Vec<f64>,
    #[arg(long, value_enum, default_value_t = LatticeMode::Statistical)]
    pub mode: LatticeMode,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Largest graph size to enumerate.
    #[arg(long, default_value_t = 5)]
    pub max_n: usize,
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepMetric {
    /// Age of the oldest entanglement, device of (2/p)^k qubits.
    Age,
    /// Phase I completion steps.
    Steps,
    /// Phase I maximum error weight.
    ErrorWeight,
    /// Diameter of successful snowball builds.
    Diameter,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long = "p", alias = "p-s", value_delimiter = ',', default_value = "0.5,0.25,0.125", allow_negative_numbers = true)]
    pub p: Vec<f64>,
    #[arg(long, value_enum, default_value_t = SweepMetric::Age)]
    pub metric: SweepMetric,
    #[arg(long, default_value = "buffer", value_parser = parse_strategy)]
    pub strategy: Strategy,
    /// Device size for phase I metrics; defaults per metric.
    #[arg(long)]
    pub device_qubits: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    pub max_steps: u64,
    #[command(flatten)]
    pub run: RunArgs,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}

fn parse_model(s: &str) -> Result<AttemptModel, String> {
    s.parse()
}
