//! `blackrt`: risk tolerance surfaces, finite-difference oracle, property
//! checks and Merton allocations from a run config.
//!
//! Exit status: 0 on success, 1 if a property check failed or a computation
//! aborted, 2 on configuration or usage errors. `BLACKRT_THREADS` caps the
//! worker pool.

use std::path::PathBuf;
use std::process::ExitCode;

use blackrt_cli::{commands, CliError, Options, Outcome, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "blackrt", version, about = "Risk tolerance surfaces for the Merton problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transform surface CSV and JSON summary
    Solve(RunArgs),
    /// Finite-difference surface and its difference to the transform
    Oracle(RunArgs),
    /// Run the property checks listed in the config
    Check(RunArgs),
    /// Optimal allocation on the output grid
    Policy(RunArgs),
    /// All of the above plus a bundle summary
    Report(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run config file
    #[arg(long, short)]
    config: PathBuf,

    /// Output directory (overrides [output] dir)
    #[arg(long, short)]
    out: Option<PathBuf>,

    /// Also write the H surface
    #[arg(long)]
    emit_h: bool,

    /// Also solve the equation for r^2
    #[arg(long)]
    square: bool,

    /// Wealth intervals (overrides [grid] nx)
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    nx: Option<u32>,

    /// Time intervals (overrides [grid] nt)
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    nt: Option<u32>,

    /// Gauss-Hermite nodes; forces quadrature for H
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    quad_order: Option<u32>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(dir) = &self.out {
            cfg.output.dir = dir.clone();
        }
        if let Some(n) = self.nx {
            cfg.grid.nx = n as usize;
        }
        if let Some(n) = self.nt {
            cfg.grid.nt = n as usize;
        }
        if let Some(n) = self.quad_order {
            cfg.grid.quad_order = Some(n as usize);
        }
        Ok(cfg)
    }

    fn options(&self) -> Options {
        Options {
            emit_h: self.emit_h,
            square: self.square,
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("BLACKRT_THREADS") else {
        return Ok(());
    };
    let n: usize = match value.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => {
            return Err(CliError::Usage(format!(
                "BLACKRT_THREADS must be a positive integer, got '{value}'"
            )))
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    init_threads()?;
    match &cli.command {
        Command::Solve(a) => commands::solve(&a.load()?, a.options()),
        Command::Oracle(a) => commands::oracle(&a.load()?, a.options()),
        Command::Check(a) => commands::check(&a.load()?),
        Command::Policy(a) => commands::policy(&a.load()?),
        Command::Report(a) => commands::report(&a.load()?, a.options()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            if let Some(table) = &outcome.table {
                print!("{table}");
            }
            for f in &outcome.files {
                eprintln!("wrote {}", outcome.dir.join(f).display());
            }
            if outcome.checks_failed {
                eprintln!("blackrt: at least one check failed");
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("blackrt: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
