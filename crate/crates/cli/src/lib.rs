//! Command-line experiment runner: scenes, fields and task parameters come
//! from one TOML config; every task writes machine-readable artifacts and
//! prints a single JSON summary line on stdout.
//!
//! Exit codes: 0 success, 1 configuration error (the message names the
//! offending key), 2 numerical failure or a comparison above tolerance.

pub mod config;
pub mod tasks;

use clap::{Parser, Subcommand};
use config::Config;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const THREADS_ENV: &str = "GAUGETOMO_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
    /// Comparison ran fine but the gap exceeds the tolerance.
    #[error("comparison above tolerance")]
    AboveTolerance(Value),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) | CliError::AboveTolerance(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "gaugetomo", about = "Broken-ray and Dirichlet-to-Neumann experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (default: GAUGETOMO_THREADS or all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct TaskArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Seed for random phantom families.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Trace one broken ray and write its vertex list.
    Trace(TaskArgs),
    /// Tabulate a broken-ray transform over a boundary/direction grid.
    Sinogram(TaskArgs),
    /// Recover the scalar potential from broken-ray data.
    Reconstruct(TaskArgs),
    /// Assemble the discrete Dirichlet-to-Neumann matrix.
    Dtn(TaskArgs),
    /// Assemble two D-to-N matrices and compare them.
    DtnCompare(TaskArgs),
    /// Decide the gauge class of two vector potentials.
    GaugeCheck(TaskArgs),
    /// Probe the stability estimate over one or many phantoms.
    Stability(TaskArgs),
    /// Compare two artifacts of the same kind.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

fn init_threads(requested: Option<usize>) {
    let n = requested.or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
    });
    if let Some(n) = n {
        // ignore failure: the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

pub fn run(cli: Cli) -> Result<Value, CliError> {
    init_threads(cli.threads);
    let started = Instant::now();
    let mut summary = match &cli.command {
        Command::Compare { a, b, tol } => tasks::run_compare(a, b, *tol)?,
        Command::Trace(args)
        | Command::Sinogram(args)
        | Command::Reconstruct(args)
        | Command::Dtn(args)
        | Command::DtnCompare(args)
        | Command::GaugeCheck(args)
        | Command::Stability(args) => {
            let config = Config::load(&args.config)?;
            let config_dir = args
                .config
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            prepare_out(&args.out)?;
            match &cli.command {
                Command::Trace(_) => tasks::run_trace(&config, &args.out)?,
                Command::Sinogram(_) => tasks::run_sinogram(&config, &args.out, &config_dir)?,
                Command::Reconstruct(_) => tasks::run_reconstruct(&config, &args.out, &config_dir)?,
                Command::Dtn(_) => tasks::run_dtn(&config, &args.out, &config_dir)?,
                Command::DtnCompare(_) => tasks::run_dtn_compare(&config, &args.out, &config_dir)?,
                Command::GaugeCheck(_) => tasks::run_gauge_check(&config, &args.out)?,
                Command::Stability(_) => {
                    tasks::run_stability(&config, &args.out, args.seed, &config_dir)?
                }
                Command::Compare { .. } => unreachable!(),
            }
        }
    };
    if let Value::Object(map) = &mut summary {
        map.insert("status".into(), Value::from("ok"));
        map.insert(
            "elapsed_ms".into(),
            Value::from(started.elapsed().as_millis() as u64),
        );
    }
    Ok(summary)
}

/// Entry point shared by the binary and the integration tests.
pub fn main_with(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/usage text
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(CliError::AboveTolerance(summary)) => {
            let mut summary = summary;
            if let Value::Object(map) = &mut summary {
                map.insert("status".into(), Value::from("above_tolerance"));
            }
            println!("{summary}");
            2
        }
        Err(e) => {
            let code = e.exit_code();
            let kind = match &e {
                CliError::Config(_) | CliError::Io(_) => "config_error",
                _ => "numerical_error",
            };
            println!(
                "{}",
                serde_json::json!({"status": kind, "error": e.to_string()})
            );
            eprintln!("error: {e}");
            code
        }
    }
}
