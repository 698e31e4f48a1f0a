//! `swe`: run the jet experiment, check operators, recompute spectra.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use swe_core::checks::{check_operators, OperatorReport};
use swe_core::config::RunConfig;
use swe_core::output;
use swe_core::runner;
use swe_core::{Result, SweError};

#[derive(Parser)]
#[command(name = "swe", version, about = "Rotating shallow water solver with PV upwinding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured experiment and write CSV outputs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.directory`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the operators and verify the discrete complex identities.
    CheckOperators {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute the kinetic energy spectrum of a saved snapshot.
    Spectrum {
        /// Snapshot manifest file.
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sampling grid size (power of two).
        #[arg(long)]
        n: Option<usize>,
    },
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| SweError::io(path, e))?;
    RunConfig::parse(&text)
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("SWE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| SweError::Configuration(format!("SWE_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| SweError::Configuration(e.to_string()))
}

fn execute(cli: Cli) -> Result<bool> {
    init_threads()?;
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load_config(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output.directory.clone());
            let summary = runner::run(&cfg, &dir)?;
            let last = summary.records.last().expect("initial record always present");
            println!(
                "completed {} steps, t = {:e} s, energy {:e}, mass {:e}; outputs in {}",
                last.step,
                last.t,
                last.energy,
                last.mass,
                dir.display()
            );
            Ok(true)
        }
        Command::CheckOperators { config } => {
            let cfg = load_config(&config)?;
            let disc = runner::discretisation(&cfg)?;
            let r = check_operators(&disc);
            println!("max |DIV·PERP|      = {:e}", r.div_perp);
            println!("max |D - M2·DIV|    = {:e} (relative)", r.weak_div);
            println!("max |R - M1·PERP|   = {:e} (relative)", r.weak_perp);
            println!("max |C + Cᵀ|        = {:e} (relative)", r.c_antisymmetry);
            println!("mass asymmetry      = {:e} (relative)", r.mass_asymmetry);
            let ok = r.passed();
            println!(
                "{} (tolerances {:e} absolute, {:e} relative)",
                if ok { "PASS" } else { "FAIL" },
                OperatorReport::DIV_PERP_TOL,
                OperatorReport::RELATIVE_TOL
            );
            Ok(ok)
        }
        Command::Spectrum { snapshot, out, n } => {
            let s = runner::snapshot_spectrum(&snapshot, n)?;
            output::write_spectrum(&out, &s)?;
            println!("wrote {} bins to {}", s.energy.len(), out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
