mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use geomrl_core::geometry::AugmentationMode;

#[derive(Parser)]
#[command(name = "geomrl", version, about = "Geometric representation learning for molecules and crystals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Periodic {
    Gathered,
    Expanded,
}

#[derive(Subcommand)]
enum Command {
    /// Train on an energy, energy+force or pretraining task.
    Train { config: PathBuf },
    /// Score a trained checkpoint on a data split.
    Eval {
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Self-supervised pretraining (task `pretrain:<kind>`).
    Pretrain { config: PathBuf },
    /// Audit a randomly initialized model's symmetry claims.
    CheckEquiv {
        model: PathBuf,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        atoms: usize,
    },
    /// Write the cutoff graph of every conformation as JSON lines.
    BuildGraph {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        cutoff: f64,
        #[arg(long, value_enum)]
        periodic: Option<Periodic>,
        #[arg(long, default_value = "edges.jsonl")]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config } => commands::cmd_train(&config, false),
        Command::Pretrain { config } => commands::cmd_train(&config, true),
        Command::Eval {
            config,
            checkpoint,
            split,
        } => commands::cmd_eval(&config, checkpoint, &split),
        Command::CheckEquiv {
            model,
            trials,
            tolerance,
            seed,
            atoms,
        } => commands::cmd_check_equiv(&model, trials, tolerance, seed, atoms),
        Command::BuildGraph {
            input,
            cutoff,
            periodic,
            output,
        } => {
            let mode = periodic.map(|p| match p {
                Periodic::Gathered => AugmentationMode::Gathered,
                Periodic::Expanded => AugmentationMode::Expanded,
            });
            commands::cmd_build_graph(&input, cutoff, mode, &output)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
