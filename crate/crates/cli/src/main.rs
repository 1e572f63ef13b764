use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lqgraphon::config::ExperimentConfig;
use lqgraphon::error::{CliError, Result};
use lqgraphon::experiments::{self, Output};
use lqgraphon::io::sibling;

#[derive(Parser)]
#[command(name = "lqgraphon", version, about = "Graphon-coupled LQ social control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (`key = value` lines); defaults apply without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV; companion tables get a suffix. Stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicas: Option<u64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Step-graphon eigenvalues and eigenvectors per N.
    Spectrum,
    /// Perpendicular and mode Riccati solutions.
    Riccati,
    /// Monte Carlo closed loop against the exact cost.
    Simulate,
    /// Graphon and noise discrepancies per N.
    Converge,
    /// Exact optimality gap per N, with a non-increasing regression gate.
    Gap,
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.replicas {
        cfg.replicas = r;
    }
    if let Some(dt) = cli.dt {
        cfg.dt = Some(dt);
    }
    if cli.out.is_some() {
        cfg.output = cli.out.clone();
    }
    let (output, failure) = match cli.command {
        Command::Spectrum => (experiments::run_spectrum(&cfg)?, None),
        Command::Riccati => (experiments::run_riccati(&cfg)?, None),
        Command::Simulate => (experiments::run_simulate(&cfg)?, None),
        Command::Converge => (experiments::run_converge(&cfg)?, None),
        Command::Gap => experiments::run_gap(&cfg)?,
    };
    emit(&output, cfg.output.as_deref())?;
    failure.map_or(Ok(()), Err)
}

/// Writes the main table to `out` and companions beside it; without a path,
/// everything goes to stdout separated by blank lines.
fn emit(output: &Output, out: Option<&std::path::Path>) -> Result<()> {
    match out {
        Some(path) => {
            output.main.write_file(path)?;
            for (suffix, table) in &output.extra {
                table.write_file(&sibling(path, suffix))?;
            }
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            output.main.write_to(&mut lock)?;
            for (suffix, table) in &output.extra {
                writeln!(lock, "\n# {suffix}").map_err(|e| CliError::io("writing stdout", e))?;
                table.write_to(&mut lock)?;
            }
        }
    }
    Ok(())
}
