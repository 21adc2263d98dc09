//! Feed every checked-in fuzz corpus seed through the parser its target
//! exercises. Keeps the seeds honest on stable toolchains, where the
//! libfuzzer harness itself cannot run.

use std::path::{Path, PathBuf};

fn corpus_dir(target: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../fuzz/corpus/{target}"))
}

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = corpus_dir(target);
    let mut out = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap_or_else(|e| panic!("{}: {e}", dir.display())) {
        let path = entry.unwrap().path();
        if path.is_file() {
            let name = path.file_name().unwrap().to_string_lossy().to_string();
            out.push((name, std::fs::read_to_string(&path).unwrap()));
        }
    }
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out.sort();
    out
}

#[test]
fn rubrics_block_seeds_parse_or_error_cleanly() {
    for (name, text) in seeds("fuzz_rubrics_block") {
        let _ = rubric_core::refinement::parse::parse_rubrics_block(&text);
        let _ = name;
    }
}

#[test]
fn preference_seeds_parse_or_error_cleanly() {
    for (_, text) in seeds("fuzz_preference_tag") {
        let _ = rubric_core::refinement::parse::parse_preference(&text);
    }
}

#[test]
fn theme_tips_seeds_parse_or_error_cleanly() {
    for (_, text) in seeds("fuzz_theme_tips") {
        if let Ok(rubric) = rubric_core::theme_tips::parse_theme_tips(&text) {
            let _ = rubric.validate(5);
        }
    }
}

#[test]
fn dataset_seeds_parse_or_error_cleanly() {
    for (_, text) in seeds("fuzz_dataset_line") {
        let _ = rubric_core::dataset::parse_pair_line(&text, 1);
        let _ = rubric_core::dataset::parse_dataset(&text);
    }
}

#[test]
fn checkpoint_seeds_parse_or_error_cleanly() {
    let mut valid = 0;
    for (name, text) in seeds("fuzz_checkpoint") {
        if rubric_core::pipeline::ExtractionState::from_json_str(&text).is_ok() {
            valid += 1;
            assert_eq!(name, "real_checkpoint");
        }
    }
    assert_eq!(valid, 1, "exactly the genuine checkpoint seed must load");
}

#[test]
fn config_seeds_parse_or_error_cleanly() {
    for (_, text) in seeds("fuzz_config") {
        if let Ok(config) = rubric_cli::config::RunConfig::from_toml_str(&text) {
            let _ = config.pipeline_config();
        }
    }
}

#[test]
fn artifact_seeds_parse_or_error_cleanly() {
    let mut parsed = 0;
    for (_, text) in seeds("fuzz_artifacts") {
        if rubric_core::artifacts::core_document_from_str(&text).is_ok() {
            parsed += 1;
        }
        if rubric_core::artifacts::pool_entry_from_str(&text).is_ok() {
            parsed += 1;
        }
    }
    assert_eq!(parsed, 2, "one core doc and one pool line seed must parse");
}
