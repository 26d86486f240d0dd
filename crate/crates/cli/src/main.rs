use std::path::PathBuf;
use std::process::ExitCode;

use caldiff_cli::config::Settings;
use caldiff_cli::error::CliError;
use caldiff_cli::{dispatch, Command};
use clap::Parser;

/// Calibrated graph diffusion experiments.
#[derive(Debug, Parser)]
#[command(name = "caldiff", version)]
struct Cli {
    /// JSON file with default settings; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("caldiff: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let settings = match &cli.config {
        Some(path) => cli.settings.overlay(Settings::load(path)?),
        None => cli.settings,
    };
    if let Some(jobs) = settings.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("jobs: {e}")))?;
    }
    dispatch(cli.command, &settings)?;
    Ok(())
}
