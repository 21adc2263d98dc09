#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(rubric) = rubric_core::theme_tips::parse_theme_tips(text) {
            // Bounds validation and re-rendering must not panic either.
            let _ = rubric.validate(5);
            let _ = rubric.render_block();
        }
    }
});
