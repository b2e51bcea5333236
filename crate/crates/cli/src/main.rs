//! `esc`: command-line front end for stationary-solution analysis of
//! perturbation-based extremum seeking loops.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::parse_param;

/// Bad flags, config files, plant names or parameters.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "esc", version, about = "Stationary solutions and bifurcations of extremum seeking loops")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// TOML file with top-level `plant`/`output`, `[params]`, `[esc]` and one section per command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// reactor, hammerstein or linear.
    #[arg(long, global = true)]
    plant: Option<String>,
    /// Plant parameter override, repeatable: `--param k2=0.03`.
    #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_param, global = true)]
    params: Vec<(String, f64)>,
    #[arg(long, global = true)]
    omega: Option<f64>,
    #[arg(long, global = true)]
    omega_h: Option<f64>,
    #[arg(long, global = true)]
    omega_l: Option<f64>,
    /// Sets ω_h = ω_l = r·ω.
    #[arg(long, global = true)]
    omega_ratio: Option<f64>,
    /// Integrator gain k (negative for minimization).
    #[arg(long, global = true, allow_hyphen_values = true)]
    gain: Option<f64>,
    /// Perturbation amplitude a.
    #[arg(long, global = true)]
    amplitude: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
enum Command {
    /// Steady-state map `u,J`.
    Equilibrium {
        /// `lo:hi:n`
        #[arg(long)]
        u_range: Option<String>,
    },
    /// Points satisfying the stationarity condition at ω, with stability labels.
    Stationary {
        #[arg(long)]
        u_range: Option<String>,
        /// Replace reduced-model labels by Floquet labels from shooting.
        #[arg(long)]
        floquet: bool,
    },
    /// Solution branches over ω with fold points.
    Branch {
        /// `lo:hi`, default 0.01:0.8.
        #[arg(long)]
        omega_range: Option<String>,
        /// `lo:hi`, default the plant's input domain.
        #[arg(long)]
        u_range: Option<String>,
        /// Number of seed frequencies.
        #[arg(long)]
        seeds: Option<usize>,
        /// Root-scan grid size per seed frequency.
        #[arg(long)]
        grid: Option<usize>,
        /// Arclength step in the chart.
        #[arg(long)]
        step: Option<f64>,
    },
    /// Time simulation of the closed loop from rest, optionally refined by shooting.
    Simulate {
        /// Initial input û(0); the plant starts at the matching equilibrium.
        #[arg(long, allow_hyphen_values = true)]
        u0: Option<f64>,
        /// Forcing periods to simulate.
        #[arg(long)]
        periods: Option<usize>,
        /// Shoot a period-one orbit from the final state and report it.
        #[arg(long)]
        shoot: bool,
        #[arg(long)]
        rtol: Option<f64>,
        #[arg(long)]
        atol: Option<f64>,
        /// Also write the orbit summary as JSON to this file.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Crossing transmission zero and steady-state gain along the equilibrium manifold.
    Zeros {
        #[arg(long)]
        u_range: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.common, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
