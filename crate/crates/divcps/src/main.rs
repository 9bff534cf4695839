use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use divcps::{exit, ExperimentConfig, RunError};
use serde_json::json;

#[derive(Parser)]
#[command(name = "divcps", version, about = "Diverse-market simulation and consistent price system experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `monte_carlo.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `output.directory`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without simulating; prints every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("{}", e.to_json_line());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match divcps::run(&cfg, seed, out.as_deref()) {
                Ok(report) => {
                    let files: Vec<String> = report.files.iter().map(|p| p.display().to_string()).collect();
                    println!("{}", json!({ "exit_code": report.exit_code, "files": files }));
                    ExitCode::from(report.exit_code as u8)
                }
                Err(e) => fail(&e),
            }
        }
        Command::Validate { config } => {
            let violations = match std::fs::read_to_string(&config) {
                Ok(text) => divcps::validate_text(&text),
                Err(e) => return fail(&RunError::Io(format!("{}: {e}", config.display()))),
            };
            println!("{}", json!({ "valid": violations.is_empty(), "violations": violations }));
            if violations.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(exit::VALIDATION as u8)
            }
        }
    }
}
