use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cos_core::dataset::{read_dump, read_records_file, DUMP_EXTENSION, DUMP_MAGIC};

use crate::{require_exists, CliError};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dump files, record JSONL files, or directories of dumps.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

fn expand(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut found: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::io(path, e))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == DUMP_EXTENSION))
        .collect();
    found.sort();
    Ok(found)
}

fn looks_like_dump(path: &Path) -> bool {
    let mut head = [0u8; 8];
    fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut head))
        .is_ok_and(|()| &head == DUMP_MAGIC)
        || path.extension().is_some_and(|e| e == DUMP_EXTENSION)
}

fn check(path: &Path) -> Result<String, String> {
    if looks_like_dump(path) {
        let loaded = read_dump(path).map_err(|e| e.to_string())?;
        let d = &loaded.dump;
        Ok(format!(
            "dump image={} question={} layers={} heads={} regions={} text={} sha256={}",
            d.meta.image_id,
            d.meta.question_id,
            d.n_layers(),
            d.n_heads,
            d.layout.n_regions,
            d.layout.n_text,
            loaded.sha256
        ))
    } else {
        let records = read_records_file(path).map_err(|e| e.to_string())?;
        Ok(format!("records count={}", records.len()))
    }
}

pub fn run(args: Args) -> Result<ExitCode, CliError> {
    let mut files = Vec::new();
    for path in &args.paths {
        require_exists(path, "input")?;
        files.extend(expand(path)?);
    }
    let mut failed = 0;
    for file in &files {
        match check(file) {
            Ok(summary) => println!("ok {} {summary}", file.display()),
            Err(message) => {
                failed += 1;
                println!("FAIL {} {message}", file.display());
            }
        }
    }
    eprintln!("{} checked, {failed} failed", files.len());
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
