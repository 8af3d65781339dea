//! `otsteg`: hide, reveal, train, solve-ot, ablate and bench.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "otsteg", version, about = "Multiple-channel optimal transport for image hiding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Hide a secret image in a cover image and write the stego image and key.
    Hide(HideArgs),
    /// Recover the secret from a stego image with its key.
    Reveal(RevealArgs),
    /// Train a hide/reveal model.
    Train(TrainArgs),
    /// Solve one transport problem between two point files.
    SolveOt(SolveOtArgs),
    /// Paired trainings with and without transport.
    Ablate(AblateArgs),
    /// Time the solvers and report their cost gaps.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct HideArgs {
    #[arg(long)]
    pub cover: Option<PathBuf>,
    #[arg(long)]
    pub secret: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out_stego: Option<PathBuf>,
    #[arg(long)]
    pub out_key: Option<PathBuf>,
    /// Metrics report path; defaults to `<out-stego>.metrics.json`.
    #[arg(long)]
    pub out_metrics: Option<PathBuf>,
    /// exact | entropic. Entropic plans are dense and yield no key.
    #[arg(long)]
    pub mode: Option<String>,
    /// Entropic regularization in cost units.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// exact | mlp: what the hiding decoder receives at the bridge.
    #[arg(long)]
    pub bridge_source: Option<String>,
    /// Bridge noise seed; defaults to the model's own.
    #[arg(long)]
    pub noise_seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RevealArgs {
    #[arg(long)]
    pub stego: Option<PathBuf>,
    #[arg(long)]
    pub key: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Original secret; when given, recovery metrics are written.
    #[arg(long)]
    pub secret: Option<PathBuf>,
    #[arg(long)]
    pub out_metrics: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Training hyperparameters shared by `train` and `ablate`.
#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    /// Directory of PGM/PPM images.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Use this many generated toy images instead of `--data`.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub lr_init: Option<f64>,
    #[arg(long)]
    pub lr_final: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub use_mcot: Option<bool>,
    #[arg(long)]
    pub charbonnier_eps: Option<f64>,
    /// charbonnier | literal | squared
    #[arg(long)]
    pub loss_form: Option<String>,
    #[arg(long)]
    pub base: Option<usize>,
    #[arg(long)]
    pub mlp_hidden: Option<usize>,
    /// straight-through | exact
    #[arg(long)]
    pub bridge_grad: Option<String>,
    /// fixed | per-sample
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Checkpoint to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SolveOtArgs {
    #[arg(long)]
    pub x_file: Option<PathBuf>,
    #[arg(long)]
    pub y_file: Option<PathBuf>,
    /// exact | entropic | brute | assignment
    #[arg(long)]
    pub solver: Option<String>,
    /// Entropic regularization; defaults to 0.01 × median cost.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Key file for permutation plans, CSV matrix for entropic ones.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Number of seeds, starting at `--seed`.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated point counts.
    #[arg(long)]
    pub sizes: Option<String>,
    /// Comma-separated, any of exact, assignment, entropic, brute.
    #[arg(long)]
    pub solvers: Option<String>,
    /// Entropic regularizations as multiples of the median cost.
    #[arg(long)]
    pub epsilon_scales: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Hide(a) => commands::hide(a),
        Command::Reveal(a) => commands::reveal(a),
        Command::Train(a) => commands::train(a),
        Command::SolveOt(a) => commands::solve_ot(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
