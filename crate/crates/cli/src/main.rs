//! `medfx` command-line tool.

mod audit;
mod config;
mod disentangle;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Failure reported as `{"error": code, "message": text}` on stderr, exit 2.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::new("IoError", format!("{}: {e}", path.display()))
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "medfx",
    version,
    about = "Treatment vs time-of-day effect disentangling and train/test leakage audits",
    after_help = "Environment:\n  MEDFX_THREADS  maximum number of worker threads\n\n\
                  Errors are written to stderr as JSON {\"error\": ..., \"message\": ...} with exit code 2."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify each participant's features and run the union-intersection tests
    #[command(after_help = disentangle::OUTPUT_HELP)]
    Disentangle(disentangle::DisentangleArgs),
    /// Repeated train/test split experiments with a random forest
    #[command(after_help = audit::OUTPUT_HELP)]
    Audit(audit::AuditArgs),
    /// Generate synthetic triplet records or a fingerprint cohort
    #[command(after_help = simulate::OUTPUT_HELP)]
    Simulate(simulate::SimulateArgs),
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// key = value configuration file; command-line flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn emit_error(code: &str, message: &str) -> ExitCode {
    let payload = serde_json::json!({ "error": code, "message": message });
    eprintln!("{payload}");
    ExitCode::from(2)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("MEDFX_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::new("InvalidEnvironment", format!("MEDFX_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::new("InvalidEnvironment", e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => emit_error("UsageError", e.to_string().trim()),
            };
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Disentangle(a) => disentangle::run(a),
        Command::Audit(a) => audit::run(a),
        Command::Simulate(a) => simulate::run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => emit_error(e.code, &e.message),
    }
}
