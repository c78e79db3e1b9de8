//! `quadmpc`: runs quadruped scenarios, hopper rollouts and standalone QPs.
//!
//! Exit status is 0 on success, 1 for configuration or I/O errors and 2
//! when a simulation fails (a fall, a diverged rollout, an unsolved QP).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod hopper_file;
mod overrides;
mod qpfile;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Failure(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "quadmpc", version, about = "Convex MPC quadruped and hopper simulations")]
#[command(after_help = "Set QUADMPC_LOG (error, warn, info, debug, trace) for diagnostics on stderr.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run quadruped scenarios; writes <out>/<name>.csv and <name>.metrics
    Run(RunArgs),
    /// Roll out the planar one-legged hopper
    Hopper(HopperArgs),
    /// Solve a QP from a plain-text file and print the solution and KKT residuals
    Qp(QpArgs),
    /// Print the contact table of every built-in gait over one cycle
    Gaits(GaitsArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file (TOML); repeat to run several
    #[arg(long, value_name = "PATH", required = true)]
    pub scenario: Vec<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "quadmpc-out")]
    pub out: PathBuf,
    /// Override a dotted key of the scenario file, e.g. config.dt=0.0005 (repeatable)
    #[arg(long, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Scenarios run in parallel
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub workers: usize,
    /// Print the fully resolved configuration as TOML and exit
    #[arg(long)]
    pub dump_config: bool,
}

#[derive(Debug, Args)]
pub struct HopperArgs {
    /// Hopper file (TOML) with [params] and [run] tables; defaults when absent
    #[arg(long, value_name = "PATH")]
    pub scenario: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "quadmpc-out")]
    pub out: PathBuf,
    /// Override a dotted key, e.g. run.speed_ref=0.5 (repeatable)
    #[arg(long, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Print the fully resolved configuration as TOML and exit
    #[arg(long)]
    pub dump_config: bool,
}

#[derive(Debug, Args)]
pub struct QpArgs {
    /// QP file in the matrix-block format
    #[arg(value_name = "FILE", conflicts_with = "random")]
    pub file: Option<PathBuf>,
    /// Solve a random strictly convex QP with N variables instead
    #[arg(long, value_name = "N")]
    pub random: Option<usize>,
    /// Seed of the random problem
    #[arg(long, default_value_t = 0, requires = "random")]
    pub seed: u64,
    /// Write the problem being solved in the matrix-block format
    #[arg(long, value_name = "PATH")]
    pub write_problem: Option<PathBuf>,
    /// Solver setting, e.g. tol=1e-8 or max_iters=500 (repeatable)
    #[arg(long, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GaitsArgs {
    /// Samples per gait cycle
    #[arg(long, value_name = "N", default_value_t = 16)]
    pub samples: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QUADMPC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => commands::run(a),
        Command::Hopper(a) => commands::hopper(a),
        Command::Qp(a) => commands::qp(a),
        Command::Gaits(a) => commands::gaits(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
