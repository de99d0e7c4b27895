//! `splab`: command-line front end for the spectral PEFT laboratory.

mod commands;
mod manifest;
mod resolve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "splab", version, about = "Spectral parameter-efficient fine-tuning laboratory", arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Output directory (default: runs/<subcommand>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON config file or a previous run manifest; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed; falls back to SPLAB_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker cap for independent runs (0 = serial); falls back to SPLAB_THREADS.
    #[arg(long, global = true, env = "SPLAB_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a heat or Burgers one-step dataset.
    GenData(GenDataArgs),
    /// Train a backbone from scratch.
    Pretrain(PretrainArgs),
    /// Fine-tune a pretrained checkpoint with one PEFT kind.
    Finetune(FinetuneArgs),
    /// Matched-budget LoRA-vs-adapter sweep on the transfer task.
    Compare(CompareArgs),
    /// Test error with high input bands removed.
    DropHigh(DropHighArgs),
    /// Singular-value statistics of full fine-tuning updates.
    DiagnoseDw(DiagnoseDwArgs),
    /// Energy-spectrum metrics of a model's predictions.
    Spectrum(SpectrumArgs),
    /// Trained adapter against rank-r truncation of a synthetic update.
    AdapterVsTrunc(AdapterVsTruncArgs),
    /// Numerical verifiers of the approximation bounds.
    VerifyTheory(VerifyTheoryArgs),
    /// Print the frequency-adaptive (or inverse) band widths.
    Schedule(ScheduleArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, value_parser = ["heat", "burgers"])]
    pub solver: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainFlags {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub log_every: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// Dataset file; generated from the config's task when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    /// Pretrained checkpoint.
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// PEFT kind, e.g. f-adapter, lora, full.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub adapter_width: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Number of seeds, counted up from --seed (default 0).
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,
    #[arg(long)]
    pub pretrain_steps: Option<usize>,
    #[arg(long)]
    pub finetune_steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct DropHighArgs {
    #[arg(long)]
    pub bands: Option<usize>,
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct DiagnoseDwArgs {
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long)]
    pub tuned: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AdapterVsTruncArgs {
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seeds: Option<u64>,
}

#[derive(Args, Debug)]
pub struct VerifyTheoryArgs {
    /// Which bound family: 1 (block-wise low rank), 2 (adapter error and spectral decay), 3 (tail energy) or all.
    #[arg(long, default_value = "all", value_parser = ["1", "2", "3", "all"])]
    pub prop: String,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 4.0)]
    pub rmin: f64,
    #[arg(long, default_value_t = 16.0)]
    pub rmax: f64,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 4)]
    pub bands: usize,
    #[arg(long, default_value_t = 16)]
    pub modes: usize,
    /// Print the inverse (low-frequency-starved) widths instead.
    #[arg(long)]
    pub inverse: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
