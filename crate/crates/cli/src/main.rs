//! `cos`: annotate attention dumps into training records, materialize ROI
//! crops, run two-step inference against a model process, summarize ROI
//! placement and verify files.

mod annotate;
mod build;
mod infer;
mod stats;
mod verify;

use std::io;
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cos_core::dataset::{InputError, RecordError};
use cos_core::inference::InferenceError;
use cos_core::stats::StatsError;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(
    name = "cos",
    version,
    about = "Question-conditioned region-of-interest pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score regions from attention dumps and write annotated records.
    Annotate(annotate::Args),
    /// Crop every record's ROI and write a training manifest.
    BuildDataset(build::Args),
    /// Ask a model for the ROI, crop it, then ask the question again.
    Infer(infer::Args),
    /// ROI coverage heatmap and area statistics for a record file.
    Stats(stats::Args),
    /// Check attention dumps and record files.
    Verify(verify::Args),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Input(#[from] InputError),
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Missing input files are reported like missing flags.
pub fn require_exists(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

pub fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()?)
}

pub fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

pub fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not a finite non-negative number"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Annotate(args) => annotate::run(args),
        Command::BuildDataset(args) => build::run(args),
        Command::Infer(args) => infer::run(args),
        Command::Stats(args) => stats::run(args),
        Command::Verify(args) => verify::run(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("cos: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
