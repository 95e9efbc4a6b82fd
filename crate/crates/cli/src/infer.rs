use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::ArgGroup;
use cos_core::geometry::DEFAULT_RESOLUTION;
use cos_core::inference::{
    run_two_step, InferConfig, InferenceError, MockOracle, Oracle, StdioOracle,
};
use serde_json::json;

use crate::{non_negative, positive, require_exists, CliError};

#[derive(Debug, clap::Args)]
#[command(group(ArgGroup::new("model").required(true).args(["oracle", "mock"])))]
pub struct Args {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    question: String,
    /// Model command line, spoken to as JSON lines over stdin/stdout.
    #[arg(long)]
    oracle: Option<String>,
    /// Scripted responses, one `{"text": ...}` line per query.
    #[arg(long)]
    mock: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION, value_parser = positive)]
    resolution: usize,
    /// Extra margin applied to a parsed box.
    #[arg(long, value_parser = non_negative)]
    margin: Option<f64>,
    /// Where the zoomed ROI image is written.
    #[arg(long, default_value = "roi.png")]
    roi_out: PathBuf,
    /// Seconds to wait for each model reply.
    #[arg(long, default_value_t = 120, value_parser = positive)]
    timeout: usize,
}

fn oracle(args: &Args) -> Result<Box<dyn Oracle>, CliError> {
    if let Some(script) = &args.mock {
        require_exists(script, "mock script")?;
        let mock = MockOracle::from_script_file(script)
            .map_err(|e| CliError::Usage(format!("{}: {e}", script.display())))?;
        return Ok(Box::new(mock));
    }
    let command = args.oracle.as_deref().unwrap_or_default();
    let words = shlex::split(command)
        .filter(|w| !w.is_empty())
        .ok_or_else(|| CliError::Usage(format!("cannot parse oracle command {command:?}")))?;
    let stdio = StdioOracle::spawn(
        &words[0],
        &words[1..],
        Duration::from_secs(args.timeout as u64),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Box::new(stdio))
}

pub fn run(args: Args) -> Result<ExitCode, CliError> {
    require_exists(&args.image, "image")?;
    let mut model = oracle(&args)?;
    let mut config = InferConfig::new(&args.roi_out);
    config.resolution = args.resolution;
    config.margin_on_parse = args.margin;

    match run_two_step(model.as_mut(), &args.image, &args.question, &config) {
        Ok(transcript) => {
            if let Some(reason) = &transcript.fallback_reason {
                eprintln!("warning: using the full image ({reason})");
            }
            let text = serde_json::to_string_pretty(&transcript).expect("transcript serializes");
            println!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Err(InferenceError::Oracle { source, partial }) => {
            let report = json!({ "error": source.to_string(), "partial": partial });
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            eprintln!("cos: oracle failed: {source}");
            Ok(ExitCode::FAILURE)
        }
        Err(e) => Err(e.into()),
    }
}
