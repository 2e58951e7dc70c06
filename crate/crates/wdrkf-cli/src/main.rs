//! Command-line interface: convergence certification, convergence studies,
//! and the LQR tracking experiment.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 mathematical
//! failure (failed certification, solver divergence).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wdrkf_cli::commands::{self, CmdError};

#[derive(Parser)]
#[command(
    name = "wdrkf",
    version,
    about = "Distributionally robust Kalman filtering toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment configuration
    #[arg(long)]
    config: PathBuf,
    /// Override the configured random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Certify an ambiguity radius under which the time-varying filter
    /// converges to the steady-state one; emits the certificate as JSON
    Certify(CommonArgs),
    /// Emit the per-step relative trace difference between the time-varying
    /// and steady-state filters as CSV
    Converge(CommonArgs),
    /// Run the Monte Carlo LQR tracking sweep and emit per-run and
    /// aggregate CSV tables
    Track(CommonArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match &cli.command {
        Command::Certify(a) => commands::certify::run(&a.config, a.seed, a.out.as_deref()),
        Command::Converge(a) => commands::converge::run(&a.config, a.seed, a.out.as_deref()),
        Command::Track(a) => commands::track::run(&a.config, a.seed, a.out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CmdError::Math(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
