//! Command-line pipeline: dataset generation, training, evaluation and latent
//! analysis on top of the `pulseforge` library.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

pub mod commands;
mod error;
pub mod output;

pub use commands::eval::eval_report;
pub use error::CliError;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "PULSEFORGE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "pulseforge", version, about = "Laser pulse shape datasets, latent models and transport analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate input/propagated profile pairs into a dataset directory.
    Generate(GenerateArgs),
    /// Train a WAE or beta-VAE on a dataset.
    Train(TrainArgs),
    /// Reconstruction and distance-correlation metrics on the held-out split.
    Eval(EvalArgs),
    /// Linear and W2-geodesic latent interpolation between two endpoints.
    Interpolate(InterpolateArgs),
    /// Gaussian mixture over the latent codes of a dataset.
    Gmm(GmmArgs),
    /// Decode sampled latents and draw emission times from them.
    Sample(SampleArgs),
    /// CSV and SVG data for the standard figures of a training run.
    ExportPlots(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of input/propagated pairs.
    #[arg(long)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Group-velocity dispersion, s^2/m.
    #[arg(long, default_value_t = 20e-27)]
    pub beta2: f64,
    /// Nonlinear coefficient, 1/(W m).
    #[arg(long, default_value_t = 0.04)]
    pub gamma_nl: f64,
    /// Fiber length, m.
    #[arg(long, default_value_t = 100.0)]
    pub fiber_length: f64,
    #[arg(long, default_value_t = 64)]
    pub fiber_steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Wae,
    Bvae,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ArchPreset {
    /// Channels 16, 32, 64, 128.
    Default,
    /// Reduced channels 8, 16, 16, 32.
    Desk,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelChoice::Wae)]
    pub model: ModelChoice,
    /// KL weight for `--model bvae`.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 150)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value_t = 32)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ArchPreset::Default)]
    pub arch: ArchPreset,
    /// Encoder channels, overriding the preset (same number of stages).
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    /// Checkpoint path; history and config are written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Seed of the distance-correlation batches.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("start").required(true).args(["from", "z_from"]))]
#[command(group = clap::ArgGroup::new("end").required(true).args(["to", "z_to"]))]
pub struct InterpolateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset supplying `--from`/`--to` profiles.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub from: Option<usize>,
    #[arg(long)]
    pub to: Option<usize>,
    /// Latent code file (numbers separated by commas or whitespace).
    #[arg(long)]
    pub z_from: Option<PathBuf>,
    #[arg(long)]
    pub z_to: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub waypoints: usize,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub optimize: bool,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GmmArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub components: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Mixture written by `gmm`; the standard normal prior is used without it.
    #[arg(long)]
    pub gmm: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub count: usize,
    #[arg(long, default_value_t = 200_000)]
    pub particles: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Directory holding a checkpoint (`*.pfwm`) and its config sidecar.
    #[arg(long)]
    pub run: PathBuf,
    /// Dataset directory; defaults to the one recorded by `train`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Sets the global rayon pool size from `PULSEFORGE_THREADS`, if present.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    // A pool may already exist when called twice in one process; that is fine.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Generate(a) => commands::generate::run(&a),
        Command::Train(a) => commands::train::run(&a),
        Command::Eval(a) => commands::eval::run(&a),
        Command::Interpolate(a) => commands::interpolate::run(&a),
        Command::Gmm(a) => commands::gmm::run(&a),
        Command::Sample(a) => commands::sample::run(&a),
        Command::ExportPlots(a) => commands::plots::run(&a),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Errors are reported on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
