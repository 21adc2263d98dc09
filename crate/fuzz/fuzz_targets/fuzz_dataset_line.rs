#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = rubric_core::dataset::parse_pair_line(text, 1);
        let _ = rubric_core::dataset::parse_dataset(text);
    }
});
