use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use cos_core::dataset::{
    annotate_batch, index_dumps, parse_catalogs, read_qa, write_records_file, AnnotateConfig,
    BatchConfig, DEFAULT_EPSILON, DEFAULT_MARGIN,
};
use cos_core::relevance::{Aggregation, InterpreterMode};

use crate::{non_negative, positive, require_exists, thread_pool, CliError};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Directory of `.cosattn` attention dumps.
    #[arg(long)]
    dumps: PathBuf,
    /// Region catalog JSON (one object or an array).
    #[arg(long)]
    regions: PathBuf,
    /// Question/answer JSON lines.
    #[arg(long)]
    qa: PathBuf,
    /// Output JSONL.
    #[arg(long)]
    out: PathBuf,
    /// Relevance threshold in (0, 1].
    #[arg(long, default_value_t = DEFAULT_EPSILON, value_parser = unit_interval)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_MARGIN, value_parser = non_negative)]
    margin: f64,
    #[arg(long, default_value_t = Aggregation::Mean)]
    aggregation: Aggregation,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    epoch: u64,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, value_parser = positive)]
    jobs: Option<usize>,
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1]"))
    }
}

pub fn run(args: Args) -> Result<ExitCode, CliError> {
    require_exists(&args.dumps, "dump directory")?;
    require_exists(&args.regions, "region catalog")?;
    require_exists(&args.qa, "qa file")?;

    let catalogs =
        parse_catalogs(&fs::read(&args.regions).map_err(|e| CliError::io(&args.regions, e))?)?;
    let qa = read_qa(BufReader::new(
        File::open(&args.qa).map_err(|e| CliError::io(&args.qa, e))?,
    ))?;
    let config = BatchConfig {
        annotate: AnnotateConfig {
            epsilon: args.epsilon,
            margin: args.margin,
            aggregation: args.aggregation,
            interpreter: InterpreterMode::ClampProduct,
        },
        seed: args.seed,
        epoch: args.epoch,
    };

    let pool = thread_pool(args.jobs)?;
    let outcome = pool.install(|| -> Result<_, CliError> {
        let index = index_dumps(&args.dumps).map_err(|e| CliError::io(&args.dumps, e))?;
        eprintln!(
            "indexed {} dumps ({} unusable), {} catalogs, {} qa pairs",
            index.dumps.len(),
            index.failures.len(),
            catalogs.len(),
            qa.len()
        );
        Ok(annotate_batch(&index, &catalogs, &qa, &config))
    })?;

    write_records_file(&outcome.records, &args.out)?;
    eprintln!(
        "wrote {} records to {}",
        outcome.records.len(),
        args.out.display()
    );
    if outcome.failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    for f in &outcome.failures {
        eprintln!("error: {}: {}", f.subject, f.message);
    }
    eprintln!(
        "{} failures, {} records written",
        outcome.failures.len(),
        outcome.records.len()
    );
    Ok(ExitCode::FAILURE)
}
