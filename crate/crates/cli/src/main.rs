//! `seqfisher`: scans, feedback optimization, verification suites and
//! Monte-Carlo runs for sequentially measured probes.
//!
//! Exit codes: 0 success, 1 numeric failure, 2 usage or configuration error.

mod commands;
mod config;
mod output;
mod verify;

use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Params;
use output::Payload;

#[derive(Parser)]
#[command(name = "seqfisher", version, about = "Fisher information rates of sequentially measured probes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// F21/Fth and its ground/excited terms against the waiting time.
    ThermoScan(Params),
    /// Uniform against outcome-conditioned waiting times over a sweep of n̄.
    ThermoFeedback(Params),
    /// Coarse-grained thermometry scan with the full-measurement curve alongside.
    ThermoCoarse(Params),
    /// Rabi-frequency estimation scan for one measurement basis.
    RabiScan(Params),
    /// Identity and oracle suites; writes a JSON report.
    Verify(Params),
    /// Estimator spread against the Cramér-Rao rate.
    Montecarlo(Params),
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numeric(_) => 1,
        }
    }
}

/// What a command hands back: the data to write, and a numeric failure to
/// report after writing it (failed grid points, failed checks).
pub struct Outcome {
    pub payload: Payload,
    pub failure: Option<String>,
}

fn run(command: Command) -> Result<Option<String>, Failure> {
    let (params, f): (Params, fn(&Params) -> Result<Outcome, Failure>) = match command {
        Command::ThermoScan(p) => (p, commands::thermo_scan),
        Command::ThermoFeedback(p) => (p, commands::thermo_feedback),
        Command::ThermoCoarse(p) => (p, commands::thermo_coarse),
        Command::RabiScan(p) => (p, commands::rabi_scan),
        Command::Verify(p) => (p, verify::run),
        Command::Montecarlo(p) => (p, commands::montecarlo),
    };
    let params = params.resolve()?;
    if let Some(out) = &params.out {
        check_writable(out)?;
    }
    let outcome = f(&params)?;
    output::write(&outcome.payload, params.out.as_deref())?;
    Ok(outcome.failure)
}

fn check_writable(path: &Path) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    if !dir.is_dir() {
        return Err(Failure::Usage(format!("output directory {} does not exist", dir.display())));
    }
    if path.is_dir() {
        return Err(Failure::Usage(format!("output path {} is a directory", path.display())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(cli.command).and_then(|failure| match failure {
        Some(message) => Err(Failure::Numeric(message)),
        None => Ok(()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (Failure::Usage(m) | Failure::Numeric(m)) = &e;
            eprintln!("seqfisher: {m}");
            ExitCode::from(e.code())
        }
    }
}
