//! `coledg`: run one of the five experiments against the core solver.
//!
//! Every run writes its artifacts plus a `manifest.txt` that echoes each
//! resolved parameter, so a result can be reproduced from the manifest
//! alone. Exit code 0 on success; any failure prints a one-line diagnostic
//! to stderr and exits nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use coledg::commands;
use coledg::config::{ConfigFile, Experiment, Overrides, Resolved};

#[derive(Parser)]
#[command(name = "coledg", version, about = "Experiments for the dispersive Maxwell solver")]
struct Cli {
    /// TOML config file; command-line flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (default `runs/<experiment>`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Fractional order in (0, 1).
    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Polynomial degree of the spatial basis.
    #[arg(long, global = true)]
    degree: Option<usize>,

    /// Number of mesh cells.
    #[arg(long, global = true)]
    cells: Option<usize>,

    /// Shrink the pinned workloads to desk scale.
    #[arg(long, global = true)]
    desk_scale: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the relaxation quadrature and write the rule with its error curve.
    Optimize,
    /// Mesh refinement study against the manufactured solution.
    Convergence,
    /// Source-free decay run tracking the discrete energies.
    Energy,
    /// Exact versus fitted dispersion curves.
    Dispersion,
    /// Wall-time scaling of the fast solver against the direct one.
    Timing,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("coledg: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let experiment = match cli.command {
        Command::Optimize => Experiment::Optimize,
        Command::Convergence => Experiment::Convergence,
        Command::Energy => Experiment::Energy,
        Command::Dispersion => Experiment::Dispersion,
        Command::Timing => Experiment::Timing,
    };

    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            ConfigFile::from_toml(&text)?
        }
        None => ConfigFile::default(),
    };

    let flags = Overrides {
        out: cli.out,
        alpha: cli.alpha,
        degree: cli.degree,
        cells: cli.cells,
        desk_scale: cli.desk_scale,
    };

    let resolved = Resolved::resolve(experiment, &file, &flags)?;
    commands::dispatch(&resolved)
}
