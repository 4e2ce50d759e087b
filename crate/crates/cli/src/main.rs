//! `marforge`: simulate datasets, pretrain the prior network, train, evaluate
//! and run inference from the command line.

mod commands;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use marforge_core::pipeline::Ablation;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] marforge_core::Error),
    #[error("{0} self-test check(s) failed")]
    Selftest(usize),
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Selftest(_) => "selftest",
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "marforge", version, about = "Unpaired dual-domain CT metal artifact reduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a train/val/test dataset of metal-affected and clean images.
    Simulate(SimulateArgs),
    /// Pretrain the sinogram inpainting prior on clean training sinograms.
    PretrainPnet(PretrainArgs),
    /// Train the artifact estimators on unpaired batches.
    Train(TrainArgs),
    /// PSNR/SSIM of inputs and corrected images over a dataset split, as CSV.
    Eval(EvalArgs),
    /// Correct one attenuation image.
    Infer(InferArgs),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 400)]
    pub n_train: usize,
    #[arg(long, default_value_t = 50)]
    pub n_val: usize,
    #[arg(long, default_value_t = 50)]
    pub n_test: usize,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long, default_value_t = 180)]
    pub angles: usize,
    /// Spectrum and attenuation table (text); the built-in model otherwise.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    /// Incident photons per ray; noise-free when omitted.
    #[arg(long)]
    pub photons: Option<f64>,
    /// Replace an existing dataset in `--out`.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Parameter file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Run configuration (key=value) for network widths and learning rates.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory: config, metrics log and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    /// Ablation preset applied after the config file.
    #[arg(long)]
    pub ablation: Option<Ablation>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Pretrained P-Net parameters; pretrained here when omitted.
    #[arg(long)]
    pub pnet: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value = "val")]
    pub split: String,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Raw tensor file with a metal-affected image in mm⁻¹.
    #[arg(long)]
    pub input: PathBuf,
    /// Raw tensor file for the corrected image.
    #[arg(long)]
    pub out: PathBuf,
    /// Metal mask (raw tensor); segmented by threshold when omitted.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Also export the corrected image as a PNG.
    #[arg(long)]
    pub png: Option<PathBuf>,
    /// Display window in HU as `lo,hi`.
    #[arg(long, default_value = "-200,600", allow_hyphen_values = true)]
    pub window: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::PretrainPnet(a) => commands::pretrain(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Infer(a) => commands::infer(&a),
        Command::Selftest => selftest::run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}
