//! `arrn`: pyramids, adaptation checks, training and evaluation from the
//! command line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 format or I/O error,
//! 3 shape error, 4 numeric failure, 64 usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use arrn::arrn::EntryPolicy;
use arrn::signal::{GridSpec, ResolutionLadder, SmoothingKernelSpec};
use arrn::DType;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "arrn", version, about = "Adaptive resolution residual networks on regular grids")]
struct Cli {
    /// Worker threads for data-parallel work (defaults to one per core).
    #[arg(long, global = true, env = "ARRN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split an ARSG signal into Laplacian pyramid files.
    Decompose(DecomposeArgs),
    /// Sum pyramid files back up to a ladder level.
    Reconstruct(ReconstructArgs),
    /// Compare adapted and full evaluation of random models.
    VerifyAdaptation(VerifyArgs),
    /// Write a synthetic band-signature dataset.
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint plus a loss curve.
    Train(TrainArgs),
    /// Accuracy sweep of a checkpoint over input resolutions.
    Eval(EvalArgs),
    /// Multiply-accumulates and wall time over input resolutions.
    Bench(BenchArgs),
    /// Kernel x dropout x mode ablation grid.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Input signal (ARSG) on one of the ladder's grids.
    #[arg(long)]
    pub input: PathBuf,
    /// Ladder extents, finest first, e.g. "64,32,16" or "32x32,16x16".
    #[arg(long)]
    pub levels: ResolutionLadder,
    /// perfect, windowed-sinc[:taps] or gaussian[:sigma[:radius]].
    #[arg(long, default_value = "perfect")]
    pub kernel: SmoothingKernelSpec,
    /// Output directory for diff_<n>.arsg, low.arsg and manifest.toml.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Directory written by `decompose`.
    #[arg(long)]
    pub dir: PathBuf,
    /// Ladder level to reconstruct.
    #[arg(long, default_value_t = 0)]
    pub level: usize,
    /// Output signal (ARSG).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Original signal; prints the max abs error against its smoothed copy.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "64,32,16")]
    pub levels: ResolutionLadder,
    #[arg(long, default_value = "perfect")]
    pub kernel: SmoothingKernelSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "f64")]
    pub dtype: DType,
    /// Largest tolerated discrepancy.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Random models per entry level.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Inputs per model.
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    /// Compare relative to the largest logit instead of absolutely.
    #[arg(long)]
    pub relative: bool,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "64,32,16")]
    pub levels: ResolutionLadder,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 512)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 256)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.1)]
    pub jitter: f64,
    /// Distinct coarse-band amplitudes (defaults to one per class).
    #[arg(long)]
    pub coarse_levels: Option<usize>,
    #[arg(long, default_value = "f32")]
    pub dtype: DType,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss curve CSV (defaults to the checkpoint path with a .csv suffix).
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long, default_value = "perfect")]
    pub kernel: SmoothingKernelSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "f32")]
    pub dtype: DType,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub weight_decay: f64,
    /// Per-residual Laplacian dropout probability; 0 disables it.
    #[arg(long, default_value_t = 0.3)]
    pub dropout_p: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Input extents to evaluate, separated by commas (default: the ladder).
    #[arg(long)]
    pub resolutions: Option<String>,
    /// full, adapted or both.
    #[arg(long, default_value = "both")]
    pub mode: String,
    #[arg(long, default_value = "prefer-finer")]
    pub policy: EntryPolicy,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Sweep CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write accuracy curves as SVG.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Record wall time (the CSV is then no longer reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Timed forward passes per row.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Output directory for rows.csv and summary.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset directory; generated from --data-seed when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub data_seed: u64,
    /// Training seeds, separated by commas.
    #[arg(long, default_value = "0,1,2")]
    pub seeds: String,
    /// Kernels, separated by commas.
    #[arg(long, default_value = "perfect,windowed-sinc,gaussian")]
    pub kernels: String,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.3)]
    pub dropout_p: f64,
    #[arg(long)]
    pub resolutions: Option<String>,
    #[arg(long, default_value = "f32")]
    pub dtype: DType,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

pub fn parse_grids(list: &str) -> Result<Vec<GridSpec>, commands::Failure> {
    list.split(',').map(|s| s.trim().parse().map_err(commands::Failure::Core)).collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(64);
        }
    }
    let result = match &cli.command {
        Command::Decompose(a) => commands::decompose(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
        Command::VerifyAdaptation(a) => commands::verify_adaptation(a),
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
