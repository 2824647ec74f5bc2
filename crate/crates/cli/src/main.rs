//! `gctf` command-line interface: fit factorization models, run the
//! link-prediction evaluation protocol, benchmark synthetic completion
//! problems, and normalize coordinate data files.
//!
//! Exit codes: 0 success, 1 parse/validation failure, 2 numeric failure.

mod commands;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "gctf",
    version,
    about = "Sparse Poisson/KL tensor factorization with EM and variational Bayes solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to data and write factors, objective trace, and manifest
    Fit(FitArgs),
    /// Hide part of a tensor, fit on the rest, and report AUC/RMSE over repeats
    Eval(EvalArgs),
    /// Generate synthetic low-rank data and emit an RMSE-vs-time trajectory
    Bench(BenchArgs),
    /// Normalize a COO text file (reindex, sort, deduplicate)
    Convert(ConvertArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    Em,
    MapEm,
    Vb,
}

impl AlgoArg {
    fn to_core(self) -> gctf_core::Algorithm {
        match self {
            AlgoArg::Em => gctf_core::Algorithm::Em,
            AlgoArg::MapEm => gctf_core::Algorithm::MapEm,
            AlgoArg::Vb => gctf_core::Algorithm::Vb,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScopeArg {
    Entries,
    Slices,
}

#[derive(Args)]
struct SolverArgs {
    /// Inference algorithm
    #[arg(long, value_enum, default_value_t = AlgoArg::Em, env = "GCTF_ALGO")]
    algo: AlgoArg,
    /// Maximum number of sweeps
    #[arg(long, default_value_t = 200, env = "GCTF_ITERS")]
    iters: usize,
    /// Relative objective-change tolerance
    #[arg(long, default_value_t = 1e-6, env = "GCTF_TOL")]
    tol: f64,
    /// Base seed; init, mask, and noise streams derive from it
    #[arg(long, default_value_t = 42, env = "GCTF_SEED")]
    seed: u64,
    /// Override every factor's prior shape A
    #[arg(long = "A", env = "GCTF_A")]
    prior_shape: Option<f64>,
    /// Override every factor's prior mean B
    #[arg(long = "B", env = "GCTF_B")]
    prior_mean: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    /// Model file
    model: PathBuf,
    /// One COO data file per observation, in model declaration order
    #[arg(required = true)]
    data: Vec<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory
    #[arg(long, env = "GCTF_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Model file
    model: PathBuf,
    /// One COO data file per observation, in model declaration order
    #[arg(required = true)]
    data: Vec<PathBuf>,
    /// Observation to split and score (position in the model)
    #[arg(long, default_value_t = 0, env = "GCTF_TARGET")]
    target: usize,
    /// Fraction of the target support hidden for testing
    #[arg(long, env = "GCTF_HIDE")]
    hide: f64,
    /// Hide random entries or whole fibers
    #[arg(long, value_enum, default_value_t = ScopeArg::Entries, env = "GCTF_SCOPE")]
    scope: ScopeArg,
    /// Index name for --scope slices
    #[arg(long, env = "GCTF_SLICE_INDEX")]
    slice_index: Option<String>,
    /// Number of independent runs
    #[arg(long, default_value_t = 10, env = "GCTF_REPEATS")]
    repeats: usize,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory
    #[arg(long, env = "GCTF_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Cube side length N (the tensor is N x N x N)
    #[arg(long, default_value_t = 100, env = "GCTF_DIMS")]
    dims: usize,
    /// Planted and fitted CP rank
    #[arg(long, default_value_t = 5, env = "GCTF_RANK")]
    rank: usize,
    /// Fraction of cells observed for training (held-out cells are sampled
    /// on top, up to the same amount)
    #[arg(long, default_value_t = 0.01, env = "GCTF_OBSERVED_FRAC")]
    observed_frac: f64,
    /// Gaussian noise std as a fraction of the data std
    #[arg(long, default_value_t = 0.2, env = "GCTF_NOISE")]
    noise: f64,
    /// Number of independent repeats
    #[arg(long, default_value_t = 1, env = "GCTF_REPEATS")]
    repeats: usize,
    /// Write the generated train/test tensors as COO files
    #[arg(long, env = "GCTF_DUMP_DATA")]
    dump_data: bool,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory
    #[arg(long, env = "GCTF_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    /// Input coordinate file
    input: PathBuf,
    /// Input format
    #[arg(long = "from", default_value = "coo-text")]
    from_format: String,
    /// Output format
    #[arg(long = "to", default_value = "coo-text")]
    to_format: String,
    /// Shift 1-based coordinates to 0-based
    #[arg(long)]
    reindex: bool,
    /// Override index names/cardinalities, e.g. "i=146,j=168,k=5"
    #[arg(long)]
    indices: Option<String>,
    /// Output file
    #[arg(long, env = "GCTF_OUT")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => commands::fit::run(&args),
        Command::Eval(args) => commands::eval::run(&args),
        Command::Bench(args) => commands::bench::run(&args),
        Command::Convert(args) => commands::convert::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<gctf_core::Error>() {
        Some(gctf_core::Error::NonFiniteUpdate(_) | gctf_core::Error::NonFiniteResult(_)) => 2,
        _ => 1,
    }
}
