//! `cdrlab`: runs the bang-bang CDR experiments from a TOML configuration and
//! writes CSV results with a JSON run manifest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments. Exit code 2.
    Config(String),
    /// The loop did not lock. Exit code 3.
    Lock(String),
    /// Numerical failure inside a run. Exit code 3.
    Simulation(String),
    /// Exit code 4.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lock(_) | CliError::Simulation(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Lock(m) => write!(f, "no lock: {m}"),
            CliError::Simulation(m) => write!(f, "simulation error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<cdrlab_core::Error> for CliError {
    fn from(e: cdrlab_core::Error) -> Self {
        use cdrlab_core::Error as E;
        match e {
            E::NoLock { .. } => CliError::Lock(e.to_string()),
            E::SimulationFault { .. } | E::NonConvergence { .. } => CliError::Simulation(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "cdrlab", version, about = "Bang-bang clock and data recovery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "cdrlab-out")]
    pub out: PathBuf,
    /// Overrides data.seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eye diagram and crossing histogram of the received signal.
    Eye(RunArgs),
    /// Recovered-clock jitter against edge-sampler offset.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// start:stop:step in mV, overrides analysis.offsets_mV.
        #[arg(long, allow_hyphen_values = true)]
        offsets: Option<String>,
    },
    /// Closed loop with the threshold integrator enabled.
    Track(RunArgs),
    /// Markov-chain prediction of the edge distribution on the one-bit-ISI
    /// eye, compared with a simulated run.
    Oracle(RunArgs),
    /// Renders a CSV written by another subcommand as SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        /// SVG file to write.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Eye(a) => commands::eye(&a),
        Command::Sweep { run, offsets } => commands::sweep(&run, offsets.as_deref()),
        Command::Track(a) => commands::track(&a),
        Command::Oracle(a) => commands::oracle(&a),
        Command::Plot { input, out } => plot::plot_file(&input, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cdrlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
