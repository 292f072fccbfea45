//! `tpt`: configuration-driven runner for the transition path pipeline.
//!
//! Exit codes: 0 ok, 1 other failure, 2 configuration, 3 metastable regions,
//! 4 sampling budget, 5 missing input file.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tpt_core::Error;

use crate::config::{ExperimentConfig, Overrides};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Stage { stage: &'static str, error: Error },
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure::Stage {
            stage: "setup",
            error,
        }
    }
}

pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T> StageExt<T> for tpt_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|error| Failure::Stage { stage, error })
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Stage { error, .. } => match error {
                Error::InvalidParameter { .. } | Error::IncommensurateMesh { .. } => 2,
                Error::NonviableRegions { .. } | Error::OverlappingRegions { .. } => 3,
                Error::SamplingBudget { .. } => 4,
                Error::Io(m) if m.starts_with("missing input") => 5,
                _ => 1,
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config: {m}"),
            Failure::Stage { stage, error } => write!(f, "{stage}: {error}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "tpt",
    version,
    about = "Approximate transition path theory on tessellations"
)]
struct Cli {
    /// TOML experiment file; built-in defaults when absent.
    #[arg(long, global = true, env = "TPT_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "TPT_SEED")]
    seed: Option<u64>,
    /// Run a single mesh width instead of `h_list`.
    #[arg(long, global = true, env = "TPT_H")]
    h: Option<f64>,
    #[arg(long, global = true, env = "TPT_DT")]
    dt: Option<f64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "TPT_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, env = "TPT_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldKind {
    Approximate,
    Reference,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write cells.csv and facets.csv for every width.
    Tessellate,
    /// Monte Carlo committor per cell.
    Committor,
    /// Finite-difference committor and current.
    Reference,
    /// Long-trajectory crossing counts and the reconstructed current.
    Current,
    /// Streamline bundle from the boundary of the reactant cells.
    Streamlines {
        #[arg(long, value_enum, default_value = "approximate")]
        field: FieldKind,
    },
    /// Errors and direction/scaling report from existing current files.
    Analyze,
    /// Every stage in sequence plus summary.json.
    Reproduce,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("`threads` must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("cannot build thread pool: {e}")))?;
    }
    let overrides = Overrides {
        seed: cli.seed,
        h: cli.h,
        dt: cli.dt,
        out: cli.out,
    };
    let config = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    let runner = commands::Runner::new(&config)?;
    match cli.command {
        Command::Tessellate => runner.tessellate(),
        Command::Committor => runner.committor().map(|_| ()),
        Command::Reference => runner.reference(),
        Command::Current => runner.current(config.dt, &config.h_list, None).map(|_| ()),
        Command::Streamlines { field } => runner.streamlines(field).map(|_| ()),
        Command::Analyze => runner.analyze().map(|_| ()),
        Command::Reproduce => runner.reproduce(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tpt: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
