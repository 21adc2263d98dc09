#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = rubric_core::artifacts::core_document_from_str(text);
        let _ = rubric_core::artifacts::pool_entry_from_str(text);
    }
});
