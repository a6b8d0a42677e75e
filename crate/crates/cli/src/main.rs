//! `bubblechan`: simulate bubble obstruction, fit the mixed Dirac-Weibull
//! model, and sweep composite-channel capacity and BER.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<bubblechan::Error> for CliError {
    fn from(e: bubblechan::Error) -> Self {
        match e {
            bubblechan::Error::Parameter(msg) => CliError::Config(msg),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bubblechan", version, about = "Bubble obstruction statistics and composite-channel performance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluate every bubble with the exact case formulas instead of the
    /// interpolation cache.
    #[arg(long)]
    pub exact_geometry: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo ensemble of received power.
    Simulate(RunArgs),
    /// Analytical model by the method of moments.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory of a previous `simulate` run to score against.
        #[arg(long)]
        simulation: Option<PathBuf>,
    },
    /// Capacity and BER sweep for one or more model files.
    Analyze {
        /// Supplies the channel section; defaults apply without it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long = "snr-db")]
        snr_db: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Model and simulation summary for the 16-cell reference grid
    /// (4 rates x 4 mean radii).
    Table1 {
        #[arg(long, default_value = "configs/table1")]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value = "out/table1")]
        out: PathBuf,
        #[arg(long)]
        exact_geometry: bool,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("BUBBLECHAN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("BUBBLECHAN_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Fit { run, simulation } => commands::fit(&run, simulation.as_deref()),
        Command::Analyze {
            config,
            models,
            snr_db,
            out,
        } => commands::analyze(config.as_deref(), &models, snr_db.as_deref(), out.as_deref()),
        Command::Table1 {
            config,
            seed,
            trials,
            out,
            exact_geometry,
        } => commands::table1(&config, seed, trials, &out, exact_geometry),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
