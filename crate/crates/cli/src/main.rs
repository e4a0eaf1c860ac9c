use clap::{Parser, Subcommand};
use cmdp_lab_cli::{cmd_describe, cmd_train, cmd_verify_bounds};
use std::path::PathBuf;

/// Constrained-MDP optimization lab: bound-verification campaigns,
/// conservative-update training, and environment inspection.
#[derive(Parser)]
#[command(name = "cmdp-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the randomized bound-verification campaign and write its CSV.
    VerifyBounds {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path, overriding the config's output_path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train on the configured environment and write the TrainLog CSV.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Dump the first iteration's batch as JSON lines to this path.
        #[arg(long, value_name = "PATH")]
        dump_batch: Option<PathBuf>,
    },
    /// Print the resolved configuration and an environment summary.
    Describe {
        #[arg(long)]
        config: PathBuf,
        /// Dump the uniform policy's exact solution as JSON to this path.
        #[arg(long, value_name = "PATH")]
        dump_dp: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::VerifyBounds { config, output } => {
            cmd_verify_bounds(&config, output.as_deref())
        }
        Command::Train {
            config,
            output,
            dump_batch,
        } => cmd_train(&config, output.as_deref(), dump_batch.as_deref()),
        Command::Describe { config, dump_dp } => cmd_describe(&config, dump_dp.as_deref()),
    };
    std::process::exit(code);
}
