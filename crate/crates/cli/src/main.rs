// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use medlab_cli::{init_threads, logits, run_experiment, validate, ExperimentConfig, RunError};

#[derive(Parser)]
#[command(
    name = "medlab",
    version,
    about = "Causal mediation and bias-metric experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a config and load its inputs without running.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print per-position logits for each prompt as JSON lines.
    Logits {
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        prompts: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), RunError> {
    init_threads()?;
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let manifest = run_experiment(&cfg)?;
            eprintln!(
                "{}: wrote {} files to {} in {} ms",
                manifest.kind,
                manifest.outputs.len() + 1,
                cfg.output_dir.display(),
                manifest.wall_time_ms
            );
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            validate(&cfg)?;
            eprintln!("{}: ok", config.display());
        }
        Command::Logits { model_dir, prompts } => {
            let out = BufWriter::new(io::stdout().lock());
            logits::dump_logits(&model_dir, &prompts, out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
