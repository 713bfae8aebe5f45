//! `texsynth` command line and streaming service.

pub mod commands;
pub mod config;
pub mod protocol;
pub mod server;
pub mod session;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] texsynth::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "texsynth", version, about = "Action-conditional vibrotactile texture synthesis")]
pub struct Cli {
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML configuration file (see the README for the schema).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Import a CSV recording (columns t, force, speed, accel), resampled to 10 kHz.
    Ingest(IngestArgs),
    /// Low-pass force and speed at 20 Hz.
    Preprocess(DataOutArgs),
    /// Write the 25-section train/val/test assignment of every recording.
    Split(SplitArgs),
    /// Pre-train the texture head by classifying material images.
    TrainClassifier(TrainClassifierArgs),
    /// Train a spectral model.
    Train(TrainArgs),
    /// Fit the AR baseline banks.
    TrainAr(TrainArArgs),
    /// Synthesize acceleration for an action script.
    Synth(SynthArgs),
    /// Compare a model against the AR baseline on the test sections.
    Eval(EvalArgs),
    /// Write texture codes as CSV.
    ExportEmbeddings(ExportArgs),
    /// Generate a synthetic material suite.
    GenSynthetic(GenSyntheticArgs),
    /// Run the streaming synthesis service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub material: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataOutArgs {
    /// Directory of `.rec` recordings.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// JSON output file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainClassifierArgs {
    /// Directory with one press-sequence subdirectory per material.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = ["embedding", "descriptor", "per-material"])]
    pub mode: String,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Texture head from `train-classifier` (descriptor mode).
    #[arg(long)]
    pub head: Option<PathBuf>,
    /// Press-sequence directory (descriptor mode).
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub material: String,
    #[arg(long, value_parser = ["gla", "stitch", "ar"], default_value = "gla")]
    pub method: String,
    #[arg(long, required_if_eq_any([("method", "gla"), ("method", "stitch")]))]
    pub model: Option<PathBuf>,
    #[arg(long = "ar-bank", required_if_eq("method", "ar"))]
    pub ar_bank: Option<PathBuf>,
    /// Press-sequence directory for descriptor-mode models.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Constant force in N.
    #[arg(long, default_value_t = 1.0)]
    pub force: f64,
    /// Constant speed in mm/s.
    #[arg(long, default_value_t = 100.0)]
    pub speed: f64,
    #[arg(long, default_value_t = 1.0)]
    pub seconds: f64,
    /// CSV with columns force, speed at 10 kHz; replaces the constant action.
    #[arg(long)]
    pub actions: Option<PathBuf>,
    /// Output CSV with columns t, accel.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "ar-bank")]
    pub ar_bank: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// CSV report; a `.summary.json` sidecar is written next to it.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, value_parser = ["gla", "frames", "stitch"])]
    pub condition: Option<String>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub images: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Press sequences of the training materials (descriptor mode).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Press sequences of further materials, exported as extra rows.
    #[arg(long = "held-out")]
    pub held_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long, default_value_t = 10)]
    pub materials: usize,
    #[arg(long, default_value_t = 10.0)]
    pub seconds: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also render a press sequence per material under `<out>/images`.
    #[arg(long)]
    pub images: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long = "static-dir")]
    pub static_dir: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
}

/// Parses `args` and runs the command, printing errors to stderr.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::execute(cli, std::env::vars()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
