use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use cos_core::dataset::{read_records_file, AnnotatedRecord};
use cos_core::geometry::{crop_roi, read_raster, write_raster, DEFAULT_RESOLUTION};
use rayon::prelude::*;
use serde::Serialize;

use crate::{positive, require_exists, thread_pool, CliError};

pub const MANIFEST: &str = "dataset.jsonl";
pub const ROI_DIR: &str = "rois";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Annotated records JSONL.
    #[arg(long)]
    records: PathBuf,
    /// Directory that record `image_path`s are relative to.
    #[arg(long)]
    images: PathBuf,
    /// Output directory for ROI crops and the manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION, value_parser = positive)]
    resolution: usize,
    #[arg(long, value_parser = positive)]
    jobs: Option<usize>,
}

#[derive(Serialize)]
struct Entry<'a> {
    #[serde(flatten)]
    record: &'a AnnotatedRecord,
    roi_image: String,
}

pub fn run(args: Args) -> Result<ExitCode, CliError> {
    require_exists(&args.records, "record file")?;
    require_exists(&args.images, "image directory")?;
    let records = read_records_file(&args.records)?;
    let roi_dir = args.out.join(ROI_DIR);
    fs::create_dir_all(&roi_dir).map_err(|e| CliError::io(&roi_dir, e))?;

    let pool = thread_pool(args.jobs)?;
    let results: Vec<Result<String, String>> = pool.install(|| {
        records
            .par_iter()
            .enumerate()
            .map(|(i, record)| {
                let name = format!("{ROI_DIR}/{:06}.png", i + 1);
                let source = args.images.join(&record.image_path);
                let image =
                    read_raster(&source).map_err(|e| format!("{}: {e}", source.display()))?;
                let crop = crop_roi(&image, &record.roi, args.resolution, 0)
                    .map_err(|e| format!("record {}: {e}", i + 1))?;
                write_raster(&args.out.join(&name), &crop).map_err(|e| format!("{name}: {e}"))?;
                Ok(name)
            })
            .collect()
    });

    let manifest = args.out.join(MANIFEST);
    let file = File::create(&manifest).map_err(|e| CliError::io(&manifest, e))?;
    let mut out = BufWriter::new(file);
    let mut failures = 0;
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(roi_image) => {
                let line =
                    serde_json::to_string(&Entry { record, roi_image }).expect("records serialize");
                writeln!(out, "{line}").map_err(|e| CliError::io(&manifest, e))?;
            }
            Err(message) => {
                failures += 1;
                eprintln!("error: {message}");
            }
        }
    }
    out.flush().map_err(|e| CliError::io(&manifest, e))?;
    eprintln!(
        "wrote {} entries to {}",
        records.len() - failures,
        manifest.display()
    );
    if failures > 0 {
        eprintln!("{failures} records failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}
