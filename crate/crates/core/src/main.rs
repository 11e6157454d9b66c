use std::path::PathBuf;
use std::process::ExitCode;

use circuit_augmentor::pipeline::{self, Overrides, PipelineConfig, RunOptions, Subcommand};
use clap::{Args, Parser, Subcommand as ClapSubcommand};

#[derive(Parser)]
#[command(name = "circuit-augmentor", version, about = "GAN-based augmentation of circuit performance data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Sample an oracle dataset to CSV.
    GenData(Common),
    /// Train a GAN with periodic evaluation and checkpoints.
    TrainGan(Common),
    /// Grid over hidden layers x learning rate x regularizer.
    Sweep(Common),
    /// Draw artificial rows from a checkpoint.
    Sample(Common),
    /// Evaluate a checkpoint against the configured dataset.
    Eval(Common),
    /// Real-only vs augmented GBRT critical-path comparison.
    AugmentTrain(Common),
    /// Density histograms for plotting.
    Report(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweep cells and experiment seeds.
    #[arg(long)]
    jobs: Option<usize>,
    /// GAN checkpoint JSON (sample, eval, report).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Command::GenData(a) => (Subcommand::GenData, a),
        Command::TrainGan(a) => (Subcommand::TrainGan, a),
        Command::Sweep(a) => (Subcommand::Sweep, a),
        Command::Sample(a) => (Subcommand::Sample, a),
        Command::Eval(a) => (Subcommand::Eval, a),
        Command::AugmentTrain(a) => (Subcommand::AugmentTrain, a),
        Command::Report(a) => (Subcommand::Report, a),
    };
    let result = PipelineConfig::load(&args.config).and_then(|config| {
        let overrides = Overrides {
            seed: args.seed,
            epochs: args.epochs,
            out: args.out.clone(),
        };
        let opts = RunOptions {
            checkpoint: args.checkpoint.clone(),
            jobs: args.jobs,
        };
        pipeline::run(cmd, config, &overrides, &opts)
    });
    match result {
        Ok(summary) => {
            println!("{}", summary.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("circuit-augmentor {}: {e}", cmd.name());
            ExitCode::FAILURE
        }
    }
}
