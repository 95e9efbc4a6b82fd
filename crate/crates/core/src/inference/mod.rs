//! Two-step interactive inference: ask for the region of interest, crop
//! it, then ask the question again with both images.

mod oracle;

pub use oracle::{
    parse_oracle_response, MockOracle, Oracle, OracleError, OracleRequest, OracleResponse,
    StdioOracle, Step,
};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{crop_roi, read_raster, write_raster, GeometryError, DEFAULT_RESOLUTION};
use crate::prompt::{build_inst1, build_inst2, PromptError};
use crate::roi::{extend_clamp, parse_ans1, quantize, RoiBox};

#[derive(Debug, Clone, PartialEq)]
pub struct InferConfig {
    pub resolution: usize,
    /// Extension applied to a successfully parsed box; `None` uses the box
    /// as generated.
    pub margin_on_parse: Option<f64>,
    pub fill: u8,
    /// Where the zoomed ROI image is written; the format follows the
    /// extension.
    pub roi_path: PathBuf,
}

impl InferConfig {
    pub fn new(roi_path: impl Into<PathBuf>) -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            margin_on_parse: None,
            fill: 0,
            roi_path: roi_path.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StepTiming {
    pub locate_ms: f64,
    pub crop_ms: f64,
    pub answer_ms: f64,
}

/// Everything exchanged during one two-step run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleTranscript {
    pub question: String,
    pub image: String,
    pub inst1: String,
    pub raw_ans1: String,
    pub parsed_box: RoiBox,
    pub fallback_used: bool,
    pub fallback_reason: Option<String>,
    pub roi_image: String,
    pub inst2: String,
    pub final_answer: String,
    pub timing: StepTiming,
}

/// The part of a transcript gathered before a run failed.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PartialTranscript {
    pub question: String,
    pub image: String,
    pub inst1: Option<String>,
    pub raw_ans1: Option<String>,
    pub parsed_box: Option<RoiBox>,
    pub fallback_used: Option<bool>,
    pub fallback_reason: Option<String>,
    pub roi_image: Option<String>,
    pub inst2: Option<String>,
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("{source}")]
    Oracle {
        source: OracleError,
        partial: Box<PartialTranscript>,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("image: {0}")]
    Image(#[from] GeometryError),
}

/// Runs locate → parse → crop → answer. A box that cannot be parsed falls
/// back to the full image; only oracle and I/O failures abort the run.
pub fn run_two_step<O: Oracle + ?Sized>(
    oracle: &mut O,
    image_path: &Path,
    question: &str,
    config: &InferConfig,
) -> Result<OracleTranscript, InferenceError> {
    let inst1 = build_inst1(question)?;
    let inst2 = build_inst2(question)?;
    let image = read_raster(image_path)?;
    let image_ref = image_path.display().to_string();
    let roi_ref = config.roi_path.display().to_string();

    let mut partial = PartialTranscript {
        question: question.to_owned(),
        image: image_ref.clone(),
        inst1: Some(inst1.clone()),
        ..Default::default()
    };
    let oracle_failed = |source, partial: &PartialTranscript| InferenceError::Oracle {
        source,
        partial: Box::new(partial.clone()),
    };

    let started = Instant::now();
    let raw_ans1 = oracle
        .query(&OracleRequest {
            step: Step::Locate,
            prompt: inst1.clone(),
            images: vec![image_ref.clone()],
        })
        .map_err(|e| oracle_failed(e, &partial))?;
    let locate_ms = elapsed_ms(started);
    partial.raw_ans1 = Some(raw_ans1.clone());

    let (parsed_box, fallback_reason) = match parse_ans1(&raw_ans1) {
        Ok(b) => match config.margin_on_parse {
            Some(m) => (quantize(extend_clamp(b, m)), None),
            None => (b, None),
        },
        Err(e) => (RoiBox::FULL, Some(format!("{}: {e}", e.kind()))),
    };
    let fallback_used = fallback_reason.is_some();
    partial.parsed_box = Some(parsed_box);
    partial.fallback_used = Some(fallback_used);
    partial.fallback_reason.clone_from(&fallback_reason);

    let started = Instant::now();
    let zoomed = crop_roi(&image, &parsed_box, config.resolution, config.fill)?;
    write_raster(&config.roi_path, &zoomed)?;
    let crop_ms = elapsed_ms(started);
    partial.roi_image = Some(roi_ref.clone());
    partial.inst2 = Some(inst2.clone());

    let started = Instant::now();
    let final_answer = oracle
        .query(&OracleRequest {
            step: Step::Answer,
            prompt: inst2.clone(),
            images: vec![image_ref.clone(), roi_ref.clone()],
        })
        .map_err(|e| oracle_failed(e, &partial))?;
    let answer_ms = elapsed_ms(started);

    Ok(OracleTranscript {
        question: question.to_owned(),
        image: image_ref,
        inst1,
        raw_ans1,
        parsed_box,
        fallback_used,
        fallback_reason,
        roi_image: roi_ref,
        inst2,
        final_answer,
        timing: StepTiming {
            locate_ms,
            crop_ms,
            answer_ms,
        },
    })
}

fn elapsed_ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}
