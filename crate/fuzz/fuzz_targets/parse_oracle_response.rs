#![no_main]

use cos_core::inference::parse_oracle_response;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(line) = std::str::from_utf8(data) {
        let _ = parse_oracle_response(line);
    }
});
