use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fvd_cli::commands::{self, CommonArgs};

/// Reward-tilted diffusion sampling with birth-death particle selection:
/// experiment runs, method comparison, and oracle verification.
#[derive(Parser)]
#[command(name = "fvd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute all (sweep point x seed) runs of a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads per run (overrides the config).
        #[arg(long)]
        workers: Option<usize>,
        /// Replace the config's seed list with a single seed.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Run the oracle verification suite; exits nonzero on any failure.
    Verify,
    /// Run both methods on one config and emit comparison data.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            workers,
            seed_override,
        } => commands::cmd_run(
            &config,
            &CommonArgs {
                out,
                workers,
                seed_override,
            },
        ),
        Command::Verify => commands::cmd_verify(),
        Command::Compare {
            config,
            out,
            workers,
            seed_override,
        } => commands::cmd_compare(
            &config,
            &CommonArgs {
                out,
                workers,
                seed_override,
            },
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
