#![no_main]

use cos_core::dataset::parse_qa_line;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(line) = std::str::from_utf8(data) {
        let _ = parse_qa_line(line);
    }
});
