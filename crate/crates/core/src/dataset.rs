//! Preference-pair ingestion: JSON Lines, one pair per line.
//!
//! Native lines carry `{id, query, response_a, response_b, preferred,
//! critique?}`. Lines in the common `chosen`/`rejected` export convention are
//! converted on the fly, with `chosen` mapped to side A.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::refinement::{PreferencePair, PreferredSide};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: duplicate pair id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("dataset is empty")]
    Empty,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeLine {
    id: String,
    query: String,
    response_a: String,
    response_b: String,
    preferred: PreferredSide,
    #[serde(default)]
    critique: Option<String>,
}

#[derive(Deserialize)]
struct ChosenRejectedLine {
    #[serde(default)]
    id: Option<String>,
    #[serde(default, alias = "prompt")]
    query: Option<String>,
    chosen: String,
    rejected: String,
    #[serde(default)]
    critique: Option<String>,
}

/// Parse one JSONL line into a pair. `line_no` is 1-based and used both for
/// error messages and for synthesizing ids in the chosen/rejected convention.
pub fn parse_pair_line(line: &str, line_no: usize) -> Result<PreferencePair, DatasetError> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| DatasetError::Line {
        line: line_no,
        message: format!("invalid JSON: {e}"),
    })?;
    let is_chosen_rejected = value.get("chosen").is_some() && value.get("rejected").is_some();
    let pair = if is_chosen_rejected {
        let raw: ChosenRejectedLine =
            serde_json::from_value(value).map_err(|e| DatasetError::Line {
                line: line_no,
                message: format!("bad chosen/rejected record: {e}"),
            })?;
        PreferencePair {
            id: raw.id.unwrap_or_else(|| format!("pair{line_no:05}")),
            query: raw.query.unwrap_or_default(),
            response_a: raw.chosen,
            response_b: raw.rejected,
            preferred: PreferredSide::A,
            critique: raw.critique,
        }
    } else {
        let raw: NativeLine = serde_json::from_value(value).map_err(|e| DatasetError::Line {
            line: line_no,
            message: format!("bad preference record: {e}"),
        })?;
        PreferencePair {
            id: raw.id,
            query: raw.query,
            response_a: raw.response_a,
            response_b: raw.response_b,
            preferred: raw.preferred,
            critique: raw.critique,
        }
    };
    validate_pair(&pair, line_no)?;
    Ok(pair)
}

fn validate_pair(pair: &PreferencePair, line_no: usize) -> Result<(), DatasetError> {
    let non_empty = [
        ("id", &pair.id),
        ("query", &pair.query),
        ("response_a", &pair.response_a),
        ("response_b", &pair.response_b),
    ];
    for (field, value) in non_empty {
        if value.trim().is_empty() {
            return Err(DatasetError::Line {
                line: line_no,
                message: format!("{field} must be non-empty"),
            });
        }
    }
    Ok(())
}

/// Parse a whole JSONL document, skipping blank lines, enforcing unique ids.
pub fn parse_dataset(text: &str) -> Result<Vec<PreferencePair>, DatasetError> {
    let mut pairs = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair = parse_pair_line(line, idx + 1)?;
        if !seen.insert(pair.id.clone()) {
            return Err(DatasetError::DuplicateId {
                line: idx + 1,
                id: pair.id,
            });
        }
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(pairs)
}

pub fn load_dataset(path: &Path) -> Result<Vec<PreferencePair>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_native_lines() {
        let text = r#"{"id":"p1","query":"q","response_a":"a","response_b":"b","preferred":"A"}
{"id":"p2","query":"q2","response_a":"a2","response_b":"b2","preferred":"B","critique":"note"}"#;
        let pairs = parse_dataset(text).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].preferred, PreferredSide::B);
        assert_eq!(pairs[1].critique.as_deref(), Some("note"));
    }

    #[test]
    fn converts_chosen_rejected_lines() {
        let text = r#"{"prompt":"q","chosen":"good","rejected":"bad"}"#;
        let pairs = parse_dataset(text).unwrap();
        assert_eq!(pairs[0].id, "pair00001");
        assert_eq!(pairs[0].response_a, "good");
        assert_eq!(pairs[0].preferred, PreferredSide::A);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "{\"id\":\"p1\",\"query\":\"q\",\"response_a\":\"a\",\"response_b\":\"b\",\"preferred\":\"A\"}\nnot json";
        match parse_dataset(text) {
            Err(DatasetError::Line { line: 2, .. }) => {}
            other => panic!("expected line-2 error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_ids_and_bad_labels() {
        let dup = r#"{"id":"p1","query":"q","response_a":"a","response_b":"b","preferred":"A"}
{"id":"p1","query":"q","response_a":"a","response_b":"b","preferred":"B"}"#;
        assert!(matches!(
            parse_dataset(dup),
            Err(DatasetError::DuplicateId { line: 2, .. })
        ));
        let tie = r#"{"id":"p1","query":"q","response_a":"a","response_b":"b","preferred":"Tie"}"#;
        assert!(matches!(parse_dataset(tie), Err(DatasetError::Line { line: 1, .. })));
    }

    #[test]
    fn rejects_empty_fields_and_unknown_keys() {
        let empty_q = r#"{"id":"p1","query":" ","response_a":"a","response_b":"b","preferred":"A"}"#;
        assert!(parse_dataset(empty_q).is_err());
        let unknown = r#"{"id":"p1","query":"q","response_a":"a","response_b":"b","preferred":"A","extra":1}"#;
        assert!(parse_dataset(unknown).is_err());
        assert!(matches!(parse_dataset("\n\n"), Err(DatasetError::Empty)));
    }
}
