//! `vpon`: feasibility regions, slice optimization, simulation checks and timing
//! sweeps driven by a JSON scenario file.

mod commands;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Job;
use scenario::Scenario;

#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Infeasible(String),
    Internal(anyhow::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e:#}"),
            CliError::Infeasible(msg) => write!(f, "infeasible: {msg}"),
            CliError::Internal(e) => write!(f, "internal error: {e:#}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "vpon", version, about = "Latency-constrained vPON slice planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario JSON file. Omit to run with built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Replaces the scenario's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Feasible (n71, n72) slice mixes per load -> region.csv
    Feasibility,
    /// Minimal-MEC slicing per seed, load and iteration budget
    Optimize,
    /// Simulation against the analytical model -> validation.csv
    Validate,
    /// Optimizer wall time over the load x iteration grid -> timing.csv
    Benchmark {
        /// Also time the optimizer with simulation replacing the analytical latency check.
        #[arg(long)]
        sim_in_loop: bool,
    },
    /// Writes the scenario's layout(s) as JSON
    GenLayout,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("VPON_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(anyhow::anyhow!("VPON_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.into()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let (mut scenario, base) = match &cli.config {
        Some(path) => Scenario::load(path)?,
        None => (Scenario::default(), PathBuf::from(".")),
    };
    if let Some(seed) = cli.seed {
        scenario.seeds = vec![seed];
    }
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Internal(anyhow::anyhow!("cannot create {}: {e}", cli.out.display())))?;
    let job = Job {
        scenario,
        base,
        out: cli.out,
    };
    match cli.command {
        Command::Feasibility => commands::feasibility(&job),
        Command::Optimize => commands::optimize(&job),
        Command::Validate => commands::validate(&job),
        Command::Benchmark { sim_in_loop } => commands::benchmark(&job, sim_in_loop),
        Command::GenLayout => commands::gen_layout(&job),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vpon: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
