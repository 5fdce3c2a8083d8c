//! `iris3d`: phantom generation, segmentation, surface reconstruction,
//! quantification and sector classification from the command line.
//!
//! Exit codes: 0 success, 2 missing or unwritable file, 3 library invariant
//! violated, 4 bad usage.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::*;
use crate::config::PipelineConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "iris3d", version = VERSION, about = "3D iris surface reconstruction and quantification")]
struct Cli {
    /// JSON configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed, handed to every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for volume-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rasterise a phantom volume: masks, boundaries and analytic curvature.
    Phantom(PhantomArgs),
    /// Segment slice images with a trained network.
    Segment(SegmentArgs),
    /// Extract upper iris boundaries from slice masks.
    Boundaries(BoundariesArgs),
    /// Build the refined surface mesh from slice boundaries.
    Reconstruct(ReconstructArgs),
    /// Estimate per-vertex curvature of a mesh.
    Quantify(QuantifyArgs),
    /// Cut a mesh into 15° sectors and write classifier samples.
    Sectors(SectorsArgs),
    /// Train the sector classifier or the segmentation network.
    Train(TrainArgs),
    /// Score sector samples with a trained classifier.
    Classify(ClassifyArgs),
    /// Region, boundary and classification metrics.
    Metrics(MetricsArgs),
    /// Phantom volumes through to classification, end to end.
    Pipeline(PipelineArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let mut config = PipelineConfig::load(cli.config.as_deref())?;
    config.propagate_seed(cli.seed);
    let ctx = Context { config, jobs: cli.jobs };
    match &cli.command {
        Command::Phantom(a) => phantom(&ctx, a),
        Command::Segment(a) => segment(&ctx, a),
        Command::Boundaries(a) => boundaries(&ctx, a),
        Command::Reconstruct(a) => reconstruct(&ctx, a),
        Command::Quantify(a) => quantify(&ctx, a),
        Command::Sectors(a) => sectors(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Classify(a) => classify(&ctx, a),
        Command::Metrics(a) => metrics(&ctx, a),
        Command::Pipeline(a) => pipeline(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("iris3d: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
