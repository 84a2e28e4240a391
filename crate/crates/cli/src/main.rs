//! `mvcp`: simulate, sweep and check the multi-virus contact process.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 invalid
//! configuration, 3 internal invariant breach.

mod commands;
mod config;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvcp_core::parallel::{configure_threads, Exec};

use crate::config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Internal(String),
    Io(io::Error),
    VerifyFailed(usize),
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(name = "mvcp", version, about = "Multi-virus contact process with death")]
struct Cli {
    /// Worker threads for replica ensembles.
    #[arg(long, global = true, env = "MVCP_THREADS")]
    threads: Option<usize>,
    /// Run replicas in order on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run replicas and write JSON-lines trajectories.
    Simulate(SimulateArgs),
    /// Estimate boundary-hit or extinction probabilities over a lambda grid.
    Sweep(SweepArgs),
    /// Print every closed-form bound for one (d, phi).
    Bounds(BoundsArgs),
    /// Exact reference values: drift of a configuration or walk absorption.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Run the self-check suite.
    Verify {
        /// Smaller replica counts.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// TOML file with default settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// finite:d:n or regular:d:depth
    #[arg(long)]
    tree: Option<String>,
    /// Edge-list file: `vertices N` then one `u v` per line.
    #[arg(long, conflicts_with = "tree")]
    graph: Option<PathBuf>,
    /// root:k or vertex:count,vertex:count,...
    #[arg(long)]
    init: Option<String>,
    /// Infection file: one `id count` per line.
    #[arg(long, conflicts_with = "init")]
    init_file: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Death probabilities phi(1),...,phi(M); the last must be 1.
    #[arg(long, value_delimiter = ',')]
    phi: Option<Vec<f64>>,
}

impl ModelArgs {
    fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let flags = ExperimentConfig {
            tree: self.tree.clone(),
            graph: self.graph.clone(),
            init: self.init.clone(),
            init_file: self.init_file.clone(),
            lambda: self.lambda,
            phi: self.phi.clone(),
            ..Default::default()
        };
        Ok(match &self.config {
            Some(path) => flags.or(ExperimentConfig::load(path)?),
            None => flags,
        })
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    max_events: Option<u64>,
    /// Stop when an infection reaches the truncation boundary.
    #[arg(long)]
    boundary_hit: bool,
    /// Write only the summary record of each replica.
    #[arg(long)]
    summary_only: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepOutcomeArg {
    Boundary,
    Extinction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepFormat {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tree degree; trees are truncated d-regular balls.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    /// Strictly increasing grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    phi: Option<Vec<f64>>,
    /// Infections placed on the root.
    #[arg(long, default_value_t = 1)]
    root: u32,
    #[arg(long, value_enum, default_value_t = SweepOutcomeArg::Boundary)]
    outcome: SweepOutcomeArg,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    max_events: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = SweepFormat::Csv)]
    format: SweepFormat,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, value_delimiter = ',')]
    phi: Vec<f64>,
}

#[derive(Subcommand, Debug)]
pub enum OracleCommand {
    /// Generator drift of rho^(infections) at the initial configuration,
    /// with the closed form when the configuration has one or two levels.
    Drift {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Absorption probability of the reference walk.
    Ruin {
        /// Up probability; defaults to p_W of --lambda and --phi.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        phi: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1)]
        start: u64,
        /// Ceiling for the linear-system cross-check.
        #[arg(long, default_value_t = 10_000)]
        ceiling: u64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        configure_threads(n);
    }
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a, exec, &mut out)?,
        Command::Sweep(a) => commands::sweep(&a, exec, &mut out)?,
        Command::Bounds(a) => commands::bounds(&a, &mut out)?,
        Command::Oracle { which } => commands::oracle(&which, &mut out)?,
        Command::Verify { quick } => commands::verify(quick, exec, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::VerifyFailed(n)) => {
            eprintln!("mvcp: {n} check(s) failed");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("mvcp: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(CliError::Io(e)) => {
            eprintln!("mvcp: {e}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("mvcp: internal error: {msg}");
            ExitCode::from(3)
        }
    }
}
