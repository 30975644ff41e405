//! Command-line interface: `synth`, `train`, `eval`, `stats`, `benchmark`.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{benchmark, eval, stats, synth, train};
pub use config::{model_spec, overlay, phantom_config, train_config, DataSettings, FileConfig, TrainFlags, DATA_ENV};

#[derive(Debug, Parser)]
#[command(name = "strokeseg", version, about = "Stroke lesion segmentation benchmark on T1-weighted volumes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded phantom dataset and its split manifest.
    Synth(SynthArgs),
    /// Train one model variant.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Wilcoxon and Pearson statistics with plots from paired volumes.
    Stats(StatsArgs),
    /// Train and evaluate all eight variants and write the combined report.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset root (default: config `[data] root`, then $STROKESEG_DATA).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Side of the square 2D model input.
    #[arg(long)]
    pub slice_extent: Option<usize>,
    /// Extents 3D inputs are resampled to.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"])]
    pub volume_extents: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub subjects: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Volume extents of each phantom.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"])]
    pub extents: Option<Vec<usize>>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub model: String,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Runs are written to `<out>/<model>/<seed>/`.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[arg(long)]
    pub width_scale: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Continue from the run directory's latest checkpoint.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model_ckpt: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Permit evaluating on the training split.
    #[arg(long)]
    pub allow_train_split: bool,
    /// Output directory (default: next to the checkpoint).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = crate::metrics::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Paired-volume CSV written by `eval` or `benchmark`.
    #[arg(long)]
    pub volumes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// One-sided alternative: `greater` or `less` (default two-sided).
    #[arg(long)]
    pub one_sided: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1)]
    pub scale: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epoch cap for every model.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Train this many models at once (each in its own run directory).
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Only these variants (default: all eight).
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Train(a) => train(&a).map(|_| ()),
        Command::Eval(a) => eval(&a),
        Command::Stats(a) => stats(&a),
        Command::Benchmark(a) => benchmark(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

