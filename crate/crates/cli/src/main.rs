mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "svofuse", version, about = "Optimal fusion of redundant sensor arrays by scale-wise variance optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a sensor array from a model preset or model file.
    Simulate(SimulateArgs),
    /// Estimate fusion coefficients from a recorded array.
    Fit(FitArgs),
    /// Fusion coefficients with bootstrap confidence intervals.
    Ci(CiArgs),
    /// Out-of-sample comparison of fusion methods on simulated arrays.
    Compare(CompareArgs),
    /// Monte Carlo coverage of the bootstrap intervals.
    Coverage(CoverageArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model preset: case1 or case2.
    #[arg(long)]
    preset: Option<String>,
    /// JSON model file (see `--export-model`).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Override the constant drift.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// CSV with a header row of sensor labels and one row per sample.
    #[arg(long)]
    input: PathBuf,
    /// Sample rate in Hz; defaults to the simulation sidecar, else 1.
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Subtract each sensor's sample mean.
    #[arg(long)]
    demean: bool,
    /// Treat the second half of each signal as an extra sensor.
    #[arg(long)]
    split_halves: bool,
}

#[derive(Debug, Args)]
struct WeightArgs {
    /// Number of decomposition levels; defaults to floor(log2 T) - 1.
    #[arg(long = "J")]
    levels: Option<usize>,
    /// Level weights: equal, long-scale, short-scale, or a comma list.
    #[arg(long, default_value = "equal")]
    omega: String,
    /// Truncate or pad a weight preset to the requested depth.
    #[arg(long)]
    adapt_omega: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of samples.
    #[arg(long = "T")]
    n_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample rate recorded in the sidecar.
    #[arg(long, default_value_t = svofuse::models::presets::SAMPLE_RATE_HZ)]
    sample_rate: f64,
    /// Also write the model as JSON and its matrices as CSV.
    #[arg(long)]
    export_model: bool,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    weights: WeightArgs,
    /// Add white-noise/random-walk fits of every fused signal.
    #[arg(long)]
    gmwm: bool,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CiArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    weights: WeightArgs,
    #[arg(long, default_value_t = svofuse::inference::DEFAULT_ALPHA)]
    alpha: f64,
    /// Bootstrap block length; defaults to ceil(T^(1/3)).
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long, default_value_t = svofuse::inference::DEFAULT_REPLICATES)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the bootstrap covariance, gradient and sandwich matrices.
    #[arg(long)]
    diagnostics: bool,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "T", default_value_t = 1 << 15)]
    n_samples: usize,
    /// Number of levels; defaults to floor(log2 T).
    #[arg(long = "J")]
    levels: Option<usize>,
    #[arg(long, default_value_t = 50)]
    n_fit: usize,
    #[arg(long, default_value_t = 10)]
    n_eval: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = svofuse::models::presets::SAMPLE_RATE_HZ)]
    sample_rate: f64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CoverageArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "T", default_value_t = 1 << 15)]
    n_samples: usize,
    #[arg(long = "J", default_value_t = 10)]
    levels: usize,
    /// Level weights, adapted to the requested depth.
    #[arg(long, default_value = "short-scale")]
    omega: String,
    #[arg(long, default_value_t = svofuse::inference::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long, default_value_t = 200)]
    replicates: usize,
    #[arg(long, default_value_t = 100)]
    mc_reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Ci(a) => commands::ci(a),
        Command::Compare(a) => commands::compare(a),
        Command::Coverage(a) => commands::coverage(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
