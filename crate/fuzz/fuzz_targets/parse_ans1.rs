#![no_main]

use cos_core::roi::{encode_ans1, parse_ans1};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(b) = parse_ans1(text) {
        let canonical = encode_ans1(&b).expect("parsed boxes are quantized");
        assert_eq!(parse_ans1(&canonical), Ok(b));
    }
});
