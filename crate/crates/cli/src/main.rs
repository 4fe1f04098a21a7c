mod commands;
mod exit;
mod output;
mod scheme;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "tera", version, about = "Tensor-network adapters: parameter counts, training, rank analysis and bound checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trainable-parameter counts for TeRA schemes and baseline ranks.
    ParamCount(commands::param_count::ParamCountArgs),
    /// Train an adapter on a recovery or MLP adaptation task.
    Fit(commands::fit::FitArgs),
    /// Numerical ranks of adapter updates stored in checkpoints.
    RankReport(commands::rank_report::RankReportArgs),
    /// Check the rank, parameter-count and approximation bounds numerically.
    Verify(commands::verify::VerifyArgs),
    /// Sweep tensorization schemes and factor initializations.
    Ablate(commands::ablate::AblateArgs),
    /// Checkpoint utilities.
    Checkpoint(CheckpointArgs),
}

#[derive(Args)]
struct CheckpointArgs {
    #[command(subcommand)]
    command: CheckpointCommand,
}

#[derive(Subcommand)]
enum CheckpointCommand {
    /// Print a checkpoint's metadata as JSON.
    Inspect { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ParamCount(a) => commands::param_count::run(a),
        Command::Fit(a) => commands::fit::run(a),
        Command::RankReport(a) => commands::rank_report::run(a),
        Command::Verify(a) => commands::verify::run(a),
        Command::Ablate(a) => commands::ablate::run(a),
        Command::Checkpoint(CheckpointArgs {
            command: CheckpointCommand::Inspect { path },
        }) => commands::checkpoint::inspect(&path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            e.exit_code()
        }
    }
}
