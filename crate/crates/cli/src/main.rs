//! `rtpim`: run workloads, single operations and cost calibration on the
//! racetrack PIM simulator.
//!
//! Exit codes: 0 success, 2 result or calibration mismatch, 1 usage,
//! configuration or runtime error.

mod config;
mod op;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{Config, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Mismatch(String),
}

impl From<racetrack_pim::Error> for CliError {
    fn from(e: racetrack_pim::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "rtpim", version, about = "Racetrack-memory processing-in-memory simulator")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Maximum transverse-read distance.
    #[arg(long, global = true)]
    trd: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports and traces.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write trace.txt and trace.json next to the report.
    #[arg(long, global = true)]
    trace: bool,
    /// Parallel engine instances when several workloads are given.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Cost table file replacing the built-in one.
    #[arg(long, global = true)]
    cost_table: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one or more workloads: bitmap, madd, gemm, conv, maxpool, fc, cnn.
    Run(RunArgs),
    /// Run a single operation on literal operands.
    Op {
        #[command(subcommand)]
        op: OpCommand,
    },
    /// Check the cost table against the reference operation totals.
    Calibrate,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    #[arg(required = true)]
    pub workloads: Vec<String>,
    /// Bitmap: number of random records.
    #[arg(long, default_value_t = 65536)]
    pub records: usize,
    /// Bitmap: number of criteria ANDed together.
    #[arg(long, default_value_t = 5)]
    pub criteria: usize,
    /// Bitmap: probability that a random bit is set.
    #[arg(long, default_value_t = 0.5)]
    pub density: f64,
    /// Bitmap: CSV or packed binary dataset instead of random data.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Bitmap: comma-separated column names to query.
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub inner: Option<usize>,
    /// Kernels: operand word width in bits.
    #[arg(long)]
    pub w: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<i64>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    /// CNN: side of the square input.
    #[arg(long, default_value_t = 8)]
    pub input_size: usize,
    /// Corrupt one result value to exercise the mismatch path.
    #[arg(long)]
    pub inject_fault: bool,
}

#[derive(Debug, Subcommand, Clone)]
pub enum OpCommand {
    /// Multi-operand addition of up to five words.
    Add5 {
        #[arg(required = true)]
        values: Vec<u64>,
        #[arg(long, default_value_t = 8)]
        w: usize,
    },
    /// Multiplication by a constant through planned shift-and-add steps.
    Mulc {
        a: u64,
        #[arg(long = "const")]
        constant: u64,
        #[arg(long, default_value_t = 8)]
        w: usize,
    },
    /// Multiplication of two words.
    Mul {
        a: u64,
        b: u64,
        #[arg(long, default_value_t = 8)]
        w: usize,
    },
    /// Bulk bitwise operation over hexadecimal rows.
    Bbop {
        op: String,
        #[arg(required = true)]
        values: Vec<String>,
    },
    /// Maximum of up to `trd - 2` words.
    Max {
        #[arg(required = true)]
        values: Vec<u64>,
        #[arg(long, default_value_t = 8)]
        w: usize,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let flags = Overrides {
        trd: cli.trd,
        seed: cli.seed,
        out: cli.out,
        trace: cli.trace,
        jobs: cli.jobs,
        cost_table: cli.cost_table,
    };
    let cfg = Config::load(cli.config.as_deref(), &flags)?;
    match cli.command {
        Command::Run(args) => run::run(&cfg, &args),
        Command::Op { op } => op::run(&cfg, &op),
        Command::Calibrate => run::calibrate(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Mismatch(m)) => {
            eprintln!("mismatch: {m}");
            ExitCode::from(2)
        }
    }
}
