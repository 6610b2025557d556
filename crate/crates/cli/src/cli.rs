use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{Check, ExperimentConfig};
use crate::pipelines::{run_checks, Lab};

#[derive(Debug, Parser)]
#[command(name = "jumpdiff", version, about = "Numerical lab for mixed local-nonlocal operators")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (flat `key = value`); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed, overriding `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Solve the 1D layer.
    Solve,
    /// Energy growth over the radius ladder.
    EnergyScan,
    /// Principal eigenvalue of the linearized operator on balls.
    Stability,
    /// Poincaré-type inequality and cutoff pair integrals in 2D.
    Poincare,
    /// Extension calibration and identities.
    Extension,
    /// Every check selected by the config's `checks` key.
    VerifyAll,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::EnergyScan => "energy-scan",
            Command::Stability => "stability",
            Command::Poincare => "poincare",
            Command::Extension => "extension",
            Command::VerifyAll => "verify-all",
        }
    }

    fn checks(self, cfg: &ExperimentConfig) -> Vec<Check> {
        match self {
            Command::Solve => vec![Check::Layer],
            Command::EnergyScan => vec![Check::Energy],
            Command::Stability => vec![Check::Stability],
            Command::Poincare => vec![Check::Poincare, Check::Cutoff],
            Command::Extension => vec![Check::Calibration, Check::Hamiltonian, Check::Modica, Check::Igamma],
            Command::VerifyAll => cfg.checks.clone(),
        }
    }
}

/// Parses, runs and reports; returns the process exit code.
pub fn run(args: Args) -> i32 {
    let mut cfg = match &args.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("config error: {e}");
                return 2;
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let checks = args.command.checks(&cfg);
    let lab = match Lab::new(cfg, out) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let summary = run_checks(&lab, args.command.name(), &checks);
    summary.print();
    summary.exit_code()
}

/// Caps the global rayon pool from `JUMPDIFF_THREADS`.
pub fn init_threads() -> Result<(), String> {
    let Ok(text) = std::env::var("JUMPDIFF_THREADS") else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("JUMPDIFF_THREADS must be a positive integer, got {text:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}
