//! QA pairs (JSON lines) and region catalogs (JSON).

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roi::RegionCatalog;

#[derive(Debug, Error)]
pub enum InputError {
    #[error("line {line}: {message}")]
    Qa { line: usize, message: String },
    #[error("region catalog: {0}")]
    Catalog(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One question about one image. `question_id` links the pair to its
/// attention dump; when absent it defaults to the pair's 0-based position
/// among the pairs of the same image, in file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaPair {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    pub question: String,
    pub answer: String,
}

impl QaPair {
    pub fn question_id(&self) -> &str {
        self.question_id.as_deref().unwrap_or("")
    }
}

pub fn parse_qa_line(line: &str) -> Result<QaPair, String> {
    let pair: QaPair = serde_json::from_str(line).map_err(|e| e.to_string())?;
    for (name, value) in [
        ("image_id", &pair.image_id),
        ("question", &pair.question),
        ("answer", &pair.answer),
    ] {
        if value.trim().is_empty() {
            return Err(format!("field `{name}` is empty"));
        }
    }
    Ok(pair)
}

/// Reads QA JSON lines and fills in missing question ids.
pub fn read_qa<R: BufRead>(input: R) -> Result<Vec<QaPair>, InputError> {
    let mut pairs = Vec::new();
    let mut ordinal: HashMap<String, usize> = HashMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut pair = parse_qa_line(&line).map_err(|message| InputError::Qa {
            line: i + 1,
            message,
        })?;
        let next = ordinal.entry(pair.image_id.clone()).or_insert(0);
        if pair.question_id.is_none() {
            pair.question_id = Some(next.to_string());
        }
        *next += 1;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Groups pairs by image, images in order of first appearance.
pub fn group_by_image(pairs: &[QaPair]) -> Vec<(String, Vec<QaPair>)> {
    let mut groups: Vec<(String, Vec<QaPair>)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for p in pairs {
        let slot = *index.entry(p.image_id.as_str()).or_insert_with(|| {
            groups.push((p.image_id.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(p.clone());
    }
    groups
}

/// Parses either one catalog object or an array of them.
pub fn parse_catalogs(bytes: &[u8]) -> Result<Vec<RegionCatalog>, InputError> {
    let parsed = if bytes.trim_ascii_start().starts_with(b"[") {
        serde_json::from_slice::<Vec<RegionCatalog>>(bytes)
    } else {
        serde_json::from_slice::<RegionCatalog>(bytes).map(|c| vec![c])
    };
    let catalogs = parsed.map_err(|e| InputError::Catalog(e.to_string()))?;
    let mut seen = HashMap::new();
    for (i, c) in catalogs.iter().enumerate() {
        if c.image_id.trim().is_empty() {
            return Err(InputError::Catalog(format!("entry {i}: empty image_id")));
        }
        if c.width == 0 || c.height == 0 {
            return Err(InputError::Catalog(format!(
                "image {}: dimensions {}x{} are empty",
                c.image_id, c.width, c.height
            )));
        }
        if c.regions.is_empty() {
            return Err(InputError::Catalog(format!(
                "image {}: no regions",
                c.image_id
            )));
        }
        if let Some(prev) = seen.insert(c.image_id.as_str(), i) {
            return Err(InputError::Catalog(format!(
                "image {} listed twice (entries {prev} and {i})",
                c.image_id
            )));
        }
    }
    Ok(catalogs)
}
