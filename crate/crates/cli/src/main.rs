//! `nqr`: generate datasets, train and evaluate denoisers, run baselines and
//! produce reports.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nqr_core::ctn::CtnScale;
use nqr_core::cvnn::{ActivationKind, ArchMode, LossKind};
use nqr_core::harness::BaselineMethod;
use nqr_core::SnrRegime;

#[derive(Parser)]
#[command(name = "nqr", version, about = "Denoising of simulated NQR free-induction-decay signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file, or every dataset named in a config.
    Gen(GenArgs),
    /// Train an ensemble of one architecture on a dataset file.
    Train(TrainArgs),
    /// Score saved checkpoints on a dataset's test split.
    Eval(EvalArgs),
    /// Run a classical denoiser on a dataset's test split.
    Baseline(BaselineArgs),
    /// Out-of-distribution study driven by a config file.
    Ood(ConfigArgs),
    /// Full evaluation matrix driven by a config file.
    Report(ConfigArgs),
    /// Print a preset experiment config as JSON.
    Preset(PresetArgs),
    /// Central-difference gradient checks for every activation and loss.
    Gradcheck(GradcheckArgs),
    /// Denoise external series with saved checkpoints or a baseline.
    Denoise(DenoiseArgs),
    /// Autoencoder activation × loss sweep on a dataset file.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    White,
    Surrogate,
    Bank,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Ae,
    Ctn,
}

#[derive(Args)]
struct GenArgs {
    /// Generate every dataset (and OOD variant) of this config instead.
    #[arg(long, conflicts_with = "out")]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "white")]
    noise: NoiseArg,
    /// Noise bank file, required with `--noise bank`.
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    f0: f64,
    #[arg(long, default_value = "low")]
    regime: SnrRegime,
    #[arg(long, default_value = "desk")]
    scale: CtnScale,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    val: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    arch: ArchArg,
    #[arg(long)]
    mode: ArchMode,
    /// Encoder window of the ConvTasNet.
    #[arg(long, default_value_t = 128)]
    window: usize,
    #[arg(long, default_value = "desk")]
    scale: CtnScale,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    activation: Option<ActivationKind>,
    #[arg(long)]
    loss: Option<LossKind>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    /// Directory receiving one checkpoint per seed.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint files, or directories whose `.nqr` files are all used.
    #[arg(long = "checkpoint", required = true, num_args = 1..)]
    checkpoints: Vec<PathBuf>,
    /// Write representative denoised test examples to this CSV.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    method: BaselineMethod,
    #[arg(long)]
    data: PathBuf,
    /// Per-example fitted parameters (dc only).
    #[arg(long)]
    params_csv: Option<PathBuf>,
    /// Score only the first N test examples.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct PresetArgs {
    #[arg(long, default_value = "desk")]
    scale: CtnScale,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 10)]
    configs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

#[derive(Args)]
struct DenoiseArgs {
    /// Series container (`.nqr`) or CSV with `re,im` columns.
    input: PathBuf,
    #[arg(long = "checkpoint", num_args = 1.., required_unless_present = "method", conflicts_with = "method")]
    checkpoints: Vec<PathBuf>,
    #[arg(long)]
    method: Option<BaselineMethod>,
    /// Center frequency assumed by the dc fit.
    #[arg(long, default_value_t = 0.0)]
    f0: f64,
    #[arg(long, default_value = "low")]
    regime: SnrRegime,
    /// Output path; `.csv` writes text, anything else a series container.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "DualReal1C")]
    mode: ArchMode,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Ood(a) => commands::ood(a),
        Command::Report(a) => commands::report(a),
        Command::Preset(a) => commands::preset(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Denoise(a) => commands::denoise(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
