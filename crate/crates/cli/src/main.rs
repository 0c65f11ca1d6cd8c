//! `chiral-drain`: build lattices, solve drained steady states, certify
//! symmetries and run disorder or loss sweeps.
//!
//! Exit codes: 0 success, 1 certification failure, 2 usage or schema error,
//! 3 numerical failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{AxisChoice, DrainArgs, Format, GlobalArgs, ModelArgs, RelationChoice, RunConfig, SigmaChoice};
use error::CliError;

#[derive(Parser)]
#[command(name = "chiral-drain", version, about = "Steady states of lattices drained through one squeezed site")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report format on stdout and for summary files.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, env = "CHIRAL_DRAIN_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a lattice file and print its diagnostics.
    Build {
        #[command(flatten)]
        model: ModelArgs,
        /// Drain site kept clean when disorder is added.
        #[arg(long, value_parser = config::parse_site, allow_hyphen_values = true)]
        drain: Option<config::Site>,
    },
    /// Solve the steady state and export correlations.
    Steady {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        drain: DrainArgs,
        /// Reference site of the correlation slice (default: the drain).
        #[arg(long, value_parser = config::parse_site, allow_hyphen_values = true)]
        reference: Option<config::Site>,
    },
    /// Energies, drain rates, dark modes and the dynamical spectrum.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        drain: DrainArgs,
    },
    /// Certify a symmetry matrix and the chiral structure at the drain.
    Check {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        drain: DrainArgs,
        #[arg(long, value_enum)]
        sigma: Option<SigmaChoice>,
        /// Relation to certify (default: chiral for bipartite, particle-hole otherwise).
        #[arg(long, value_enum)]
        relation: Option<RelationChoice>,
    },
    /// Mirrored-pair entanglement over a disorder or loss grid.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        drain: DrainArgs,
        #[arg(long, value_enum)]
        axis: Option<AxisChoice>,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        realizations: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let globals = GlobalArgs {
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        format: cli.format,
    };
    let mut cfg: RunConfig = config::load(&globals)?;
    match cli.command {
        Command::Build { model, drain } => {
            cfg.apply_model(&model)?;
            cfg.apply_drain(&DrainArgs {
                drain,
                ..Default::default()
            });
            cfg.resolve_drain();
            commands::build(&cfg)
        }
        Command::Steady { model, drain, reference } => {
            cfg.apply_model(&model)?;
            cfg.apply_drain(&drain);
            if reference.is_some() {
                cfg.analysis.reference = reference;
            }
            cfg.resolve_drain();
            commands::steady(&cfg)
        }
        Command::Spectrum { model, drain } => {
            cfg.apply_model(&model)?;
            cfg.apply_drain(&drain);
            cfg.resolve_drain();
            commands::spectrum(&cfg)
        }
        Command::Check { model, drain, sigma, relation } => {
            cfg.apply_model(&model)?;
            cfg.apply_drain(&drain);
            if let Some(s) = sigma {
                cfg.analysis.sigma = s;
            }
            if relation.is_some() {
                cfg.analysis.relation = relation;
            }
            cfg.resolve_drain();
            commands::check(&cfg)
        }
        Command::Sweep {
            model,
            drain,
            axis,
            values,
            realizations,
        } => {
            cfg.apply_model(&model)?;
            cfg.apply_drain(&drain);
            if let Some(a) = axis {
                cfg.analysis.axis = a;
            }
            if let Some(v) = values {
                cfg.analysis.values = v;
            }
            if let Some(n) = realizations {
                cfg.analysis.realizations = n;
            }
            cfg.resolve_drain();
            commands::sweep(&cfg, cli.jobs)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
