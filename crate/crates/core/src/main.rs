use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sica::cli::{self, RunConfig};
use sica::integrators::Method;
use sica::model::AdjointMode;

/// SICA HIV/AIDS model: simulation, integrator comparison and optimal prevention.
#[derive(Parser)]
#[command(name = "sica", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the normalized model and write `t,s,i,c,a`.
    Simulate {
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plot: bool,
    },
    /// Solve the prevention control problem by forward-backward sweep.
    Optimize {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plot: bool,
        #[arg(long, value_parser = parse_adjoint)]
        adjoint: Option<AdjointMode>,
    },
    /// Tabulate Euler, RK2 and RK4 errors against DP45 next to the published tables.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Estimate convergence orders of the fixed-step methods.
    Orders {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: sica::Error| e.to_string())
}

fn parse_adjoint(s: &str) -> Result<AdjointMode, String> {
    s.parse().map_err(|e: sica::Error| e.to_string())
}

fn load(path: Option<&PathBuf>) -> sica::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> sica::Result<cli::Outcome> {
    match cli.command {
        Command::Simulate {
            method,
            config,
            out,
            plot,
        } => {
            let mut cfg = load(config.as_ref())?;
            cfg.output.csv = out.or(cfg.output.csv);
            cfg.output.plot |= plot;
            let method = method
                .or(cfg.method)
                .ok_or_else(|| sica::Error::Config("--method is required (euler, rk2, rk4 or dp45)".into()))?;
            cli::cmd_simulate(&cfg, method)
        }
        Command::Optimize {
            config,
            out,
            plot,
            adjoint,
        } => {
            let mut cfg = load(config.as_ref())?;
            cfg.output.csv = out.or(cfg.output.csv);
            cfg.output.plot |= plot;
            if let Some(mode) = adjoint {
                cfg.adjoint_mode = mode;
            }
            cli::cmd_optimize(&cfg)
        }
        Command::Compare { config } => cli::cmd_compare(&load(config.as_ref())?),
        Command::Orders { config } => cli::cmd_orders(&load(config.as_ref())?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", cli::diagnostic_line(&err));
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
