//! `netsynth`: validate evidence networks, fit synthesis models, simulate
//! fixtures and export reports.
//!
//! Exit codes: 0 success, 1 input error, 2 convergence warning (some
//! R-hat >= 1.05, outputs still written), 3 internal error. Usage errors
//! count as input errors. Nothing but `--help` and `--version` writes to
//! standard output.

mod commands;
mod options;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use options::{FitArgs, ReportArgs, SimulateArgs};

pub const EXIT_INPUT: u8 = 1;
pub const EXIT_CONVERGENCE: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

/// Largest R-hat accepted without a convergence warning.
pub const RHAT_BAR: f64 = 1.05;

#[derive(Debug, Parser)]
#[command(name = "netsynth", version, about = "Bayesian cross-design network meta-analysis")]
struct Cli {
    /// Worker threads for parallel chains (defaults to all cores).
    #[arg(long, global = true, env = "NETSYNTH_THREADS")]
    threads: Option<usize>,

    /// Suppress progress output on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and check a network; prints a structural report.
    Validate {
        /// Directory with treatments.csv, studies.csv, ipd.csv, ad.csv.
        #[arg(long)]
        data: PathBuf,
        /// Also check a model config against the data.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit a model and write draws, reports and a run manifest.
    Fit(Box<FitArgs>),
    /// Write a synthetic network and its true values.
    Simulate(SimulateArgs),
    /// Re-export reports from a stored fit.
    Report(ReportArgs),
    /// Re-run a stored fit and check that every output is byte-identical.
    Replay {
        /// Output directory of an earlier `fit`.
        #[arg(long)]
        fit: PathBuf,
    },
}

/// Error caused by user input (files, flags, data), mapped to exit code 1.
#[derive(Debug)]
pub struct InputError(pub anyhow::Error);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(InputError(e.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: cannot set thread count: {e}");
        }
    }
    let result = match cli.command {
        Command::Validate { data, config } => commands::validate(&data, config.as_deref()),
        Command::Fit(args) => commands::fit(&args, cli.quiet),
        Command::Simulate(args) => commands::simulate(&args, cli.quiet),
        Command::Report(args) => commands::report(&args, cli.quiet),
        Command::Replay { fit } => commands::replay(&fit, cli.quiet),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<InputError>()) {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::from(EXIT_INTERNAL)
            }
        }
    }
}
