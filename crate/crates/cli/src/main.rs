use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simmst::data::Split;
use simmst::model::TdlKind;

mod commands;
mod config;

use config::UsageError;

#[derive(Parser, Debug)]
#[command(name = "simmst", version, about = "Multi-mode spatial-temporal demand forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic multi-mode dataset.
    Generate(GenerateArgs),
    /// Train a model and keep the best-validation checkpoint.
    Train(RunArgs),
    /// Score a trained run on one split and write the metric CSV.
    Evaluate(EvalArgs),
    /// Write predictions for every window of one split.
    Predict(EvalArgs),
    /// Finite-difference check of all gradients on the tiny configuration.
    Gradcheck(GradcheckArgs),
    /// Print the parameter count and the scaling report.
    Params(ParamsArgs),
    /// Train the full model and its three ablations and compare test MAE.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Output dataset directory [default: $SIMMST_OUTPUT_ROOT/data].
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML file with generator settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    /// Gain of every coupling.
    #[arg(long)]
    gain: Option<f64>,
    /// Lag of every coupling, in steps.
    #[arg(long)]
    lag: Option<usize>,
    /// Also write `<mode>.csv` next to the binary files.
    #[arg(long)]
    csv: bool,
}

/// Flags that override the configuration file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory [default: $SIMMST_OUTPUT_ROOT/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    history: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long)]
    tdl_kind: Option<TdlKind>,
    #[arg(long)]
    no_tdl: bool,
    #[arg(long)]
    no_csrl: bool,
    #[arg(long)]
    no_ccl: bool,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Suppress per-epoch progress lines.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Checkpoint to load [default: <run>/best.ckpt].
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset directory [default: the one recorded in the run].
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output file [default: inside the run directory].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ParamsArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Node counts for the scaling sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 40, 80])]
    sweep_nodes: Vec<usize>,
    /// History lengths for the scaling sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32, 64])]
    sweep_windows: Vec<usize>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2])]
    seeds: Vec<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a.overrides),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Predict(a) => commands::predict(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Params(a) => commands::params(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
