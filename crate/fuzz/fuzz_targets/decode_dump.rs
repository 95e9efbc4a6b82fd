#![no_main]

use cos_core::dataset::{decode_dump, encode_dump};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(dump) = decode_dump(data) {
        let bytes = encode_dump(&dump).expect("decoded dumps are valid");
        assert_eq!(decode_dump(&bytes).expect("re-encoded dump decodes"), dump);
    }
});
