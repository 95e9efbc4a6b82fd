//! Joins dumps, catalogs and QA pairs into annotated records.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use super::dump::{read_dump, DumpError, LoadedDump, DUMP_EXTENSION};
use super::inputs::{group_by_image, QaPair};
use super::records::{AnnotatedRecord, Provenance};
use super::sampler::{sample_one_qa, SamplerError};
use crate::prompt::{build_conversation, PromptError};
use crate::relevance::{
    propagate_relevance, region_scores, Aggregation, AttentionDump, InterpreterMode, RelevanceError,
};
use crate::roi::{
    extend_clamp, quantize, threshold_mask, union_bbox, RegionCatalog, RoiBox, RoiError,
};

pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotateConfig {
    pub epsilon: f64,
    pub margin: f64,
    pub aggregation: Aggregation,
    pub interpreter: InterpreterMode,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            margin: DEFAULT_MARGIN,
            aggregation: Aggregation::Mean,
            interpreter: InterpreterMode::ClampProduct,
        }
    }
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("join error: {0}")]
    Join(String),
    #[error(transparent)]
    Relevance(#[from] RelevanceError),
    #[error(transparent)]
    Roi(#[from] RoiError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// The quantized ROI a dump selects within `catalog`.
pub fn select_roi(
    dump: &AttentionDump,
    catalog: &RegionCatalog,
    config: &AnnotateConfig,
) -> Result<RoiBox, AnnotateError> {
    if dump.layout.n_regions != catalog.regions.len() {
        return Err(AnnotateError::Join(format!(
            "dump has {} region tokens but catalog for {} lists {} boxes",
            dump.layout.n_regions,
            catalog.image_id,
            catalog.regions.len()
        )));
    }
    let map = propagate_relevance(dump, config.interpreter)?;
    let scores = region_scores(&map, config.aggregation)?;
    let mask = threshold_mask(&scores, config.epsilon)?;
    let raw = union_bbox(catalog, &mask)?;
    Ok(quantize(extend_clamp(raw, config.margin)))
}

/// Builds one training record. `dump_sha256` is recorded as provenance.
pub fn annotate(
    dump: &AttentionDump,
    dump_sha256: &str,
    catalog: &RegionCatalog,
    qa: &QaPair,
    config: &AnnotateConfig,
) -> Result<AnnotatedRecord, AnnotateError> {
    for (what, id) in [("dump", &dump.meta.image_id), ("qa pair", &qa.image_id)] {
        if *id != catalog.image_id {
            return Err(AnnotateError::Join(format!(
                "{what} is for image {id:?}, catalog is for {:?}",
                catalog.image_id
            )));
        }
    }
    let roi = select_roi(dump, catalog, config)?;
    let conversation = build_conversation(&qa.question, &roi, &qa.answer)?;
    Ok(AnnotatedRecord {
        image_id: catalog.image_id.clone(),
        image_path: catalog
            .image_path
            .clone()
            .unwrap_or_else(|| catalog.image_id.clone()),
        question: qa.question.clone(),
        answer: qa.answer.clone(),
        roi,
        conversation,
        provenance: Provenance {
            epsilon: config.epsilon,
            margin: config.margin,
            aggregation: config.aggregation,
            interpreter: config.interpreter,
            dump_sha256: dump_sha256.to_owned(),
            seed: None,
            epoch: None,
        },
    })
}

/// Something that could not be processed, named by file or image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub subject: String,
    pub message: String,
}

/// Every valid dump in a directory keyed by `(image_id, question_id)`.
#[derive(Debug, Default)]
pub struct DumpIndex {
    pub dumps: BTreeMap<(String, String), (PathBuf, LoadedDump)>,
    pub failures: Vec<Failure>,
}

/// Loads all `*.cosattn` files under `dir` (non-recursive), in parallel on
/// the current rayon pool. Unreadable or duplicate dumps become failures.
pub fn index_dumps(dir: &Path) -> std::io::Result<DumpIndex> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == DUMP_EXTENSION))
        .collect();
    paths.sort();
    let loaded: Vec<(PathBuf, Result<LoadedDump, DumpError>)> = paths
        .into_par_iter()
        .map(|p| {
            let r = read_dump(&p);
            (p, r)
        })
        .collect();

    let mut index = DumpIndex::default();
    for (path, result) in loaded {
        match result {
            Ok(d) => {
                let key = (
                    d.dump.meta.image_id.clone(),
                    d.dump.meta.question_id.clone(),
                );
                if let Some((first, _)) = index.dumps.get(&key) {
                    index.failures.push(Failure {
                        subject: path.display().to_string(),
                        message: format!(
                            "duplicate dump for image {:?} question {:?} (already in {})",
                            key.0,
                            key.1,
                            first.display()
                        ),
                    });
                } else {
                    index.dumps.insert(key, (path, d));
                }
            }
            Err(e) => index.failures.push(Failure {
                subject: path.display().to_string(),
                message: e.to_string(),
            }),
        }
    }
    Ok(index)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchConfig {
    pub annotate: AnnotateConfig,
    pub seed: u64,
    pub epoch: u64,
}

#[derive(Debug, Default)]
pub struct BatchOutcome {
    pub records: Vec<AnnotatedRecord>,
    pub failures: Vec<Failure>,
}

/// One record per image: samples a QA pair for `(seed, image_id, epoch)`,
/// looks up its dump and annotates it. Records follow the first-appearance
/// order of images in `qa`, whatever the pool size.
pub fn annotate_batch(
    index: &DumpIndex,
    catalogs: &[RegionCatalog],
    qa: &[QaPair],
    config: &BatchConfig,
) -> BatchOutcome {
    let by_image: BTreeMap<&str, &RegionCatalog> =
        catalogs.iter().map(|c| (c.image_id.as_str(), c)).collect();
    let groups = group_by_image(qa);
    let results: Vec<Result<AnnotatedRecord, Failure>> = groups
        .par_iter()
        .map(|(image_id, pairs)| {
            let fail = |message: String| Failure {
                subject: format!("image {image_id}"),
                message,
            };
            let catalog = by_image
                .get(image_id.as_str())
                .ok_or_else(|| fail("no region catalog".into()))?;
            let pair =
                sample_one_qa(pairs, config.epoch, config.seed).map_err(|e| fail(e.to_string()))?;
            let key = (image_id.clone(), pair.question_id().to_owned());
            let (path, loaded) = index.dumps.get(&key).ok_or_else(|| {
                fail(format!(
                    "no valid dump for question {:?}",
                    pair.question_id()
                ))
            })?;
            let mut record = annotate(
                &loaded.dump,
                &loaded.sha256,
                catalog,
                pair,
                &config.annotate,
            )
            .map_err(|e| fail(format!("{}: {e}", path.display())))?;
            record.provenance.seed = Some(config.seed);
            record.provenance.epoch = Some(config.epoch);
            Ok(record)
        })
        .collect();

    let mut outcome = BatchOutcome {
        failures: index.failures.clone(),
        ..Default::default()
    };
    for r in results {
        match r {
            Ok(rec) => outcome.records.push(rec),
            Err(f) => outcome.failures.push(f),
        }
    }
    outcome
}
