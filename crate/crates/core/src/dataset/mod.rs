//! Annotation pipeline: file formats, QA sampling and record construction.

mod annotate;
mod dump;
mod inputs;
mod records;
mod sampler;

pub use annotate::{
    annotate, annotate_batch, index_dumps, select_roi, AnnotateConfig, AnnotateError, BatchConfig,
    BatchOutcome, DumpIndex, Failure, DEFAULT_EPSILON, DEFAULT_MARGIN,
};
pub use dump::{
    decode_dump, encode_dump, read_dump, sha256_hex, write_dump, DumpError, LoadedDump,
    DUMP_EXTENSION, DUMP_MAGIC,
};
pub use inputs::{group_by_image, parse_catalogs, parse_qa_line, read_qa, InputError, QaPair};
pub use records::{
    parse_record_line, read_records, read_records_file, write_records, write_records_file,
    AnnotatedRecord, Provenance, RecordError,
};
pub use sampler::{sample_index, sample_one_qa, SamplerError};
