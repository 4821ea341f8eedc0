mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::CliError;

/// Dataset generation, DMD-accelerated MLP training and parameter sweeps.
#[derive(Debug, Parser)]
#[command(name = "dmdnet", version, about)]
pub struct Cli {
    /// TOML configuration file; command-line flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (overrides DMDNET_THREADS and the config file).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the dispersion model over an LHS design and save the dataset.
    Generate(GenerateArgs),
    /// Train an MLP on a dataset, with or without DMD extrapolation.
    Train(TrainArgs),
    /// Grid of DMD trainings over snapshot counts m and step counts s.
    Sweep(SweepArgs),
    /// Solve the similarity boundary-layer equation and dump the profile.
    Blasius(BlasiusArgs),
    /// Summarize training logs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of parameter samples.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    /// Number of probes in the default layout.
    #[arg(long)]
    pub probes: Option<usize>,
    /// Dataset file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also export inputs and outputs as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AmplitudeArg {
    LeastSquares,
    ConjugateTranspose,
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    /// Snapshots per DMD fit.
    #[arg(long)]
    pub m: Option<usize>,
    /// Extrapolation steps per DMD event.
    #[arg(long)]
    pub s: Option<u32>,
    #[arg(long)]
    pub dmd_tol: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for the weight initialization.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Reset Adam moments after each DMD event.
    #[arg(long)]
    pub reset_adam: bool,
    /// Rescale eigenvalues with modulus above one before extrapolating.
    #[arg(long)]
    pub clamp_unstable: bool,
    #[arg(long, value_enum)]
    pub amplitudes: Option<AmplitudeArg>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset produced by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Output file prefix (default: `dmd` or `baseline`).
    #[arg(long)]
    pub tag: Option<String>,
    /// Plain optimizer run without DMD events.
    #[arg(long)]
    pub no_dmd: bool,
    /// Directory for per-event snapshot CSV dumps.
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Snapshot counts, comma separated.
    #[arg(long = "m-values", alias = "m", value_delimiter = ',')]
    pub m_values: Option<Vec<usize>>,
    /// Extrapolation steps, comma separated.
    #[arg(long = "s-values", alias = "s", value_delimiter = ',')]
    pub s_values: Option<Vec<u32>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub dmd_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalingArg {
    TwoNu,
    Nu,
}

#[derive(Debug, Args)]
pub struct BlasiusArgs {
    /// Profile CSV (eta, f, f', f'').
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub u0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub uh: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub uv: Option<f64>,
    #[arg(long)]
    pub eta_max: Option<f64>,
    #[arg(long)]
    pub n_eta: Option<usize>,
    #[arg(long, value_enum)]
    pub scaling: Option<ScalingArg>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Training log CSVs written by `train`.
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    /// Write the summary table to this CSV as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let threads = config::resolve_threads(cli.threads, file.threads)?;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let ctx = commands::Context {
        argv: std::env::args().collect(),
        threads: rayon::current_num_threads(),
    };
    match cli.command {
        Command::Generate(a) => commands::generate(&ctx, file, &a),
        Command::Train(a) => commands::train(&ctx, file, &a),
        Command::Sweep(a) => commands::sweep(&ctx, file, &a),
        Command::Blasius(a) => commands::blasius(&ctx, file, &a),
        Command::Report(a) => commands::report(&ctx, file, &a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
