//! `COSATTN1` attention dump files.
//!
//! Layout: 8-byte magic, `u32` little-endian header length, UTF-8 JSON
//! header, then for each layer the attention tensor followed by its
//! gradient, each `heads × N × N` little-endian `f32` in row-major order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::relevance::{AttentionDump, DumpMeta, LayerMaps, RelevanceError, TokenLayout};

pub const DUMP_MAGIC: &[u8; 8] = b"COSATTN1";
/// Extension used when scanning a directory for dumps.
pub const DUMP_EXTENSION: &str = "cosattn";

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("format error: {0}")]
    Format(String),
    #[error(
        "truncated or oversized payload: header implies {expected} bytes in total, \
         file has {actual} (data ends at byte offset {actual})"
    )]
    Truncation { expected: usize, actual: usize },
    #[error("validation error: {0}")]
    Validation(#[from] RelevanceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DumpHeader {
    image_id: String,
    #[serde(deserialize_with = "string_or_integer")]
    question_id: String,
    n_layers: usize,
    n_heads: usize,
    n_regions: usize,
    n_text: usize,
    d_h: usize,
    grad_target: String,
}

fn string_or_integer<'de, D: Deserializer<'de>>(de: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        Text(String),
        Number(u64),
    }
    Ok(match Id::deserialize(de)? {
        Id::Text(s) => s,
        Id::Number(n) => n.to_string(),
    })
}

/// A dump read from disk together with the SHA-256 of its bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDump {
    pub dump: AttentionDump,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Serializes a dump after validating it. Output is deterministic.
pub fn encode_dump(dump: &AttentionDump) -> Result<Vec<u8>, DumpError> {
    dump.validate()?;
    let header = DumpHeader {
        image_id: dump.meta.image_id.clone(),
        question_id: dump.meta.question_id.clone(),
        n_layers: dump.n_layers(),
        n_heads: dump.n_heads,
        n_regions: dump.layout.n_regions,
        n_text: dump.layout.n_text,
        d_h: dump.meta.d_h,
        grad_target: dump.meta.grad_target.clone(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| DumpError::Format(e.to_string()))?;
    let header_len = u32::try_from(header.len())
        .map_err(|_| DumpError::Format("header longer than 4 GiB".into()))?;
    let per_tensor = dump.layers.first().map_or(0, |l| l.attn.len());
    let mut out = Vec::with_capacity(12 + header.len() + dump.n_layers() * 2 * per_tensor * 4);
    out.extend_from_slice(DUMP_MAGIC);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header);
    for layer in &dump.layers {
        for v in layer.attn.iter().chain(&layer.grad) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses and validates a dump from raw bytes.
pub fn decode_dump(bytes: &[u8]) -> Result<AttentionDump, DumpError> {
    if bytes.len() < DUMP_MAGIC.len() || &bytes[..8] != DUMP_MAGIC {
        let seen = String::from_utf8_lossy(&bytes[..bytes.len().min(8)]).into_owned();
        return Err(DumpError::Format(format!(
            "bad magic {seen:?}, expected \"COSATTN1\""
        )));
    }
    let len_bytes: [u8; 4] =
        bytes
            .get(8..12)
            .and_then(|s| s.try_into().ok())
            .ok_or(DumpError::Truncation {
                expected: 12,
                actual: bytes.len(),
            })?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or(DumpError::Truncation {
            expected: 12 + header_len,
            actual: bytes.len(),
        })?;
    let header: DumpHeader = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| DumpError::Format(format!("header: {e}")))?;

    let n = header.n_regions.checked_add(header.n_text);
    let per_tensor = n
        .and_then(|n| n.checked_mul(n))
        .and_then(|nn| nn.checked_mul(header.n_heads))
        .ok_or_else(|| DumpError::Format("header dimensions overflow".into()))?;
    if per_tensor == 0 || header.n_layers == 0 {
        return Err(DumpError::Format(format!(
            "empty tensors: {} layers, {} heads, {} tokens",
            header.n_layers,
            header.n_heads,
            header.n_regions + header.n_text
        )));
    }
    let expected = per_tensor
        .checked_mul(header.n_layers)
        .and_then(|v| v.checked_mul(2 * 4))
        .and_then(|v| v.checked_add(header_end))
        .ok_or_else(|| DumpError::Format("header dimensions overflow".into()))?;
    if expected != bytes.len() {
        return Err(DumpError::Truncation {
            expected,
            actual: bytes.len(),
        });
    }

    let mut floats = bytes[header_end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let layers = (0..header.n_layers)
        .map(|_| {
            let attn = floats.by_ref().take(per_tensor).collect();
            let grad = floats.by_ref().take(per_tensor).collect();
            LayerMaps { attn, grad }
        })
        .collect();
    let dump = AttentionDump {
        meta: DumpMeta {
            image_id: header.image_id,
            question_id: header.question_id,
            d_h: header.d_h,
            grad_target: header.grad_target,
        },
        layout: TokenLayout {
            n_regions: header.n_regions,
            n_text: header.n_text,
        },
        n_heads: header.n_heads,
        layers,
    };
    dump.validate()?;
    Ok(dump)
}

pub fn read_dump(path: &Path) -> Result<LoadedDump, DumpError> {
    let bytes = fs::read(path)?;
    let dump = decode_dump(&bytes)?;
    Ok(LoadedDump {
        dump,
        sha256: sha256_hex(&bytes),
    })
}

/// Writes `dump` and returns the SHA-256 of the written bytes.
pub fn write_dump(dump: &AttentionDump, path: &Path) -> Result<String, DumpError> {
    let bytes = encode_dump(dump)?;
    fs::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}
