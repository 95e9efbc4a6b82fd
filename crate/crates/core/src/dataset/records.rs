//! Annotated-record JSON lines.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::Conversation;
use crate::relevance::{Aggregation, InterpreterMode};
use crate::roi::{encode_ans1, RoiBox};

/// Settings and input checksum that produced a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub epsilon: f64,
    pub margin: f64,
    pub aggregation: Aggregation,
    pub interpreter: InterpreterMode,
    pub dump_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedRecord {
    pub image_id: String,
    pub image_path: String,
    pub question: String,
    pub answer: String,
    pub roi: RoiBox,
    pub conversation: Conversation,
    pub provenance: Provenance,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One compact JSON object per line, fields in declaration order.
pub fn write_records<W: Write>(records: &[AnnotatedRecord], mut out: W) -> Result<(), RecordError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records_file(records: &[AnnotatedRecord], path: &Path) -> Result<(), RecordError> {
    write_records(records, BufWriter::new(File::create(path)?))
}

/// Parses one record line and checks the ROI grid and conversation rules.
pub fn parse_record_line(line: &str) -> Result<AnnotatedRecord, String> {
    let record: AnnotatedRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if !record.roi.is_quantized() {
        return Err(format!("roi {} is not on the 0.001 grid", record.roi));
    }
    record.conversation.lint().map_err(|e| e.to_string())?;
    let encoded = encode_ans1(&record.roi).map_err(|e| e.to_string())?;
    if record.conversation.turns[1].content != encoded {
        return Err(format!(
            "box answer {:?} does not match roi {encoded}",
            record.conversation.turns[1].content
        ));
    }
    Ok(record)
}

/// Reads records; blank lines are skipped, line numbers are 1-based.
pub fn read_records<R: BufRead>(input: R) -> Result<Vec<AnnotatedRecord>, RecordError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record_line(&line).map_err(|message| RecordError::Parse {
            line: i + 1,
            message,
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_records_file(path: &Path) -> Result<Vec<AnnotatedRecord>, RecordError> {
    read_records(BufReader::new(File::open(path)?))
}
