//! `emfisim`: quantize weights, inject modeled EMFI faults, analyze the
//! damage, run chunked sensitivity campaigns and draw fault maps.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emfisim_core::formats::FormatKind;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "emfisim", version, about = "EMFI weight-corruption simulator")]
pub struct Cli {
    /// JSON run configuration; command-line flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert an FP32 weight store to another format.
    Quantize(QuantizeArgs),
    /// Generate a fault mask, apply it and report the damage.
    Inject(InjectArgs),
    /// Compare an original and a corrupted blob.
    Analyze(AnalyzeArgs),
    /// Fault each chunk of the model in turn and measure accuracy.
    Campaign(CampaignArgs),
    /// Render a mask file as a PGM fault map and CSV cell list.
    Faultmap(FaultmapArgs),
}

#[derive(Args, Debug)]
pub struct QuantizeArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    format: Option<FormatKind>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InjectArgs {
    /// Manifest of the blob; without it only byte statistics are reported.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Fault model as JSON, e.g. '{"kind":"random_bitflips","ber":0.01}'.
    #[arg(long, value_name = "JSON", conflicts_with = "ber")]
    fault_model: Option<String>,
    /// Shorthand for a random bit-flip model at this rate.
    #[arg(long)]
    ber: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// First byte of the faulted window.
    #[arg(long, default_value_t = 0)]
    offset: usize,
    /// Window length in bytes; defaults to the rest of the blob.
    #[arg(long)]
    len: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Original blob.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Corrupted blob of the same length.
    #[arg(long)]
    corrupted: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CampaignArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to these formats (repeatable).
    #[arg(long)]
    format: Vec<FormatKind>,
    #[arg(long, value_name = "BYTES")]
    chunk_len: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Fault-map columns.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    bytes_per_cell: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FaultmapArgs {
    /// Mask file (JSON).
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    bytes_per_cell: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Quantize(a) => commands::quantize(a, &config),
        Command::Inject(a) => commands::inject(a, &config),
        Command::Analyze(a) => commands::analyze(a, &config),
        Command::Campaign(a) => commands::campaign(a, &config),
        Command::Faultmap(a) => commands::faultmap(a, &config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
