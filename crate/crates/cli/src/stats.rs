use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use cos_core::dataset::read_records_file;
use cos_core::stats::{area_stats_from_records, heatmap_from_records, DEFAULT_GRID};
use serde_json::json;

use crate::{positive, require_exists, CliError};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    records: PathBuf,
    /// Heatmap cells per side.
    #[arg(long, default_value_t = DEFAULT_GRID, value_parser = positive)]
    grid: usize,
    /// Write the normalized heatmap as an 8-bit PGM.
    #[arg(long)]
    pgm: Option<PathBuf>,
    /// Write raw heatmap counts as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<ExitCode, CliError> {
    require_exists(&args.records, "record file")?;
    let records = read_records_file(&args.records)?;
    let heatmap = heatmap_from_records(&records, args.grid)?;
    let area = area_stats_from_records(&records)?;
    if let Some(path) = &args.pgm {
        fs::write(path, heatmap.to_pgm()).map_err(|e| CliError::io(path, e))?;
    }
    if let Some(path) = &args.csv {
        fs::write(path, heatmap.to_csv()).map_err(|e| CliError::io(path, e))?;
    }
    let summary = json!({
        "records": records.len(),
        "grid": args.grid,
        "max_coverage": heatmap.counts.iter().max(),
        "area": area,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    Ok(ExitCode::SUCCESS)
}
