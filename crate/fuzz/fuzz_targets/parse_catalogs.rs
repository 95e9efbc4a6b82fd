#![no_main]

use cos_core::dataset::parse_catalogs;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_catalogs(data);
});
