//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(name = "btf", version, about = "Bayesian tensor filtering")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GlobalArgs {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
pub enum Command {
    /// Write a synthetic data set and its ground truth.
    Generate(GenerateArgs),
    /// Fit a model to long-format or plate data.
    Fit(FitArgs),
    /// Reproduce a benchmark table.
    Benchmark(BenchmarkArgs),
    /// Score a curve summary against ground truth.
    Metrics(MetricsArgs),
    /// Summarize the posterior of a finished fit.
    Predict(PredictArgs),
    /// Re-run the command recorded in a manifest and compare output hashes.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Fit(_) => "fit",
            Command::Benchmark(_) => "benchmark",
            Command::Metrics(_) => "metrics",
            Command::Predict(_) => "predict",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerateKind {
    /// Constrained gamma-observation curve of the sampler benchmark.
    Gass,
    /// Piecewise-constant Poisson count tensor with a held-out corner.
    Poisson,
    /// Gaussian tensor of smooth curves with occasional jumps.
    Gaussian,
    /// Simulated microwell plates for the dose-response model.
    Plates,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub kind: GenerateKind,
    /// Tensor rows (cell lines); the default depends on the kind
    #[arg(long)]
    pub rows: Option<usize>,
    /// Tensor columns (drugs)
    #[arg(long)]
    pub cols: Option<usize>,
    /// Points per curve
    #[arg(long)]
    pub doses: Option<usize>,
    /// Latent dimension of the generating factors.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Replicates per cell
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Held-out corner of the Poisson tensor, as `rows,cols`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub holdout: Option<Vec<usize>>,
    /// Observation noise sd (gaussian)
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Per-step level-shift probability (gaussian)
    #[arg(long)]
    pub jump_prob: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Long-format CSV: `row,col,dose,replicate,value`.
    #[arg(long, conflicts_with = "plates", required_unless_present = "plates")]
    pub data: Option<PathBuf>,
    /// Plate CSV: `plate_id,row,col,dose_index,replicate,value,is_control`.
    #[arg(long)]
    pub plates: Option<PathBuf>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Grid axes such as `rho2=0.001,0.01,0.1 d=1,3`; one run per combination.
    #[arg(long, num_args = 1..)]
    pub grid: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkKind {
    /// GASS against rejection, logistic and projection baselines.
    GassTable1,
    /// Held-out scores on the Poisson dynamical system.
    PoissonTable2,
    /// Simulated dose-response screens.
    DoseSim,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchmarkArgs {
    #[arg(value_enum)]
    pub kind: BenchmarkKind,
    /// Independent trials, each on freshly generated data
    #[arg(long)]
    pub trials: Option<usize>,
    /// Retained draws per sampler (gass-table1).
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    /// Angle grid resolution of GASS.
    #[arg(long, default_value_t = 512)]
    pub grid_size: usize,
    /// Burn-in sweeps (poisson-table2, dose-sim)
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Retained sweeps after burn-in (poisson-table2, dose-sim)
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MetricsArgs {
    /// Curve summary written by `fit` or `predict`.
    #[arg(long)]
    pub pred: PathBuf,
    /// `row,col,dose,value` ground truth written by `generate`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Score only cells flagged unobserved in the summary.
    #[arg(long)]
    pub unobserved_only: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    /// Output directory of a finished fit.
    #[arg(long)]
    pub from: PathBuf,
    /// Long-format data used to flag observed cells.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Central interval level.
    #[arg(long, default_value_t = 0.9)]
    pub level: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest of the run to reproduce.
    pub manifest: PathBuf,
}
