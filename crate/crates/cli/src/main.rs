//! `gtlab`: generate, analyze, simulate, sweep and verify gradient tracking
//! experiments described by a JSON config.
//!
//! Exit codes: 0 all checks pass, 2 invalid input, 3 analysis failure (not
//! admissible, residuals, not converged or biased, failed property),
//! 4 divergence, 5 regulator infeasible.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{EXIT_ANALYSIS, EXIT_DIVERGED, EXIT_VALIDATION};
use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "gtlab", version, about = "Gradient tracking laboratory on quadratic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the simulation horizon.
    #[arg(long, global = true)]
    t_max: Option<usize>,
    /// Overrides the gains with scalar gradient tracking at this stepsize.
    #[arg(long, global = true)]
    gamma: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write problem, weight and graph files.
    Gen,
    /// Closed-loop stability, reachability and regulator report.
    Analyze,
    /// Run the distributed iteration and write trajectory CSVs.
    Simulate,
    /// Critical stepsize by bisection and a stepsize table.
    Sweep,
    /// Property suites on the configured and random instances.
    Verify,
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<gtlab_core::Error>() {
        Some(gtlab_core::Error::Diverged { .. }) => EXIT_DIVERGED,
        Some(gtlab_core::Error::EigenFailure | gtlab_core::Error::NotAdmissibleAtLowerBracket(_)) => EXIT_ANALYSIS,
        _ => EXIT_VALIDATION,
    }
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let path = cli.config.as_ref().ok_or_else(|| anyhow::anyhow!("--config is required"))?;
    let overrides = Overrides { seed: cli.seed, out: cli.out.clone(), t_max: cli.t_max, gamma: cli.gamma };
    let experiment = config::load(path, &overrides)?;
    match cli.command {
        Command::Gen => commands::gen(&experiment),
        Command::Analyze => commands::analyze(&experiment),
        Command::Simulate => commands::simulate(&experiment),
        Command::Sweep => commands::sweep(&experiment),
        Command::Verify => commands::verify(&experiment),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
