//! `pfls`: build, query and benchmark pivot-filtering indexes, and report
//! spectral profiles and intrinsic-dimensionality estimates.
//!
//! Payloads go to stdout as JSON or CSV, logs to stderr. Exit codes: 0 on
//! success, 2 on usage errors, 3 on data errors.

mod bench;
mod commands;
mod input;
mod spectrum;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pfls_core::dataspace::{CenterSpec, Kernel};

#[derive(Parser)]
#[command(
    name = "pfls",
    version,
    about = "Exact similarity search with pivot-filtered linear scans"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index and write it to disk.
    Build(BuildArgs),
    /// Run kNN or range queries against a saved index.
    Query(QueryArgs),
    /// Sweep pivot counts and report pruning statistics.
    Bench(bench::BenchArgs),
    /// Spectral profile, TRIP curve and suggested pivot count.
    Spectrum(spectrum::SpectrumArgs),
    /// Convert a dataset between CSV and the binary format.
    Convert(ConvertArgs),
}

/// Dataset location and how to interpret it.
#[derive(Args, Clone)]
pub struct DataArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// `csv` or `pfls-bin`; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    /// `dot`, `rbf:GAMMA` or `poly:DEGREE,OFFSET`.
    #[arg(long, default_value = "dot")]
    pub kernel: Kernel,
    /// `none`, `mean` or `point:I`.
    #[arg(long, default_value = "none")]
    pub center: CenterSpec,
}

#[derive(Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub pivots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// Format of the query file; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    #[command(flatten)]
    pub mode: QueryMode,
    /// kNN: smallest-distance, largest-distance, smallest-ip, largest-ip.
    /// Range: distance-within, ip-at-least, ip-at-most.
    #[arg(long)]
    pub kind: Option<String>,
}

#[derive(Args, Clone, Copy)]
#[group(required = true, multiple = false)]
pub struct QueryMode {
    /// Number of neighbors.
    #[arg(long)]
    pub knn: Option<usize>,
    /// Range threshold.
    #[arg(long, allow_negative_numbers = true)]
    pub range: Option<f64>,
}

#[derive(Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Output format; inferred from the extension of `--out` when omitted.
    #[arg(long)]
    pub to: Option<String>,
}

/// An error in how the tool was invoked, as opposed to in the data.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use pfls_core::Error as E;
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Parameter(_) | E::Unsupported(_) | E::Budget { .. } => 2,
                _ => 3,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(a) => commands::build(a),
        Command::Query(a) => commands::query(a),
        Command::Bench(a) => bench::run(a),
        Command::Spectrum(a) => spectrum::run(a),
        Command::Convert(a) => commands::convert(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
