#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = rubric_cli::config::RunConfig::from_toml_str(text) {
            // Derived configs must reject bad values, not panic on them.
            let _ = config.selection_config();
            let _ = config.pipeline_config();
        }
    }
});
