//! Artifact files: pool, core set, structured rubrics, run report, traces.
//!
//! Every JSON artifact carries a `schema_version` and round-trips exactly
//! (`load(save(x)) == x`). Writes go through a temp-file rename so a crashed
//! run never leaves a half-written artifact behind.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{PairError, PipelineStopReason, RubricPool};
use crate::refinement::Rubric;
use crate::selection::{CoreSet, SelectionTrace};
use crate::theme_tips::ThemeTipsRubric;

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        source: io::Error,
    },
    #[error("{path} line {line}: {message}")]
    PoolLine {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Malformed { path: String, message: String },
    #[error("{path}: schema version {found} unsupported (expected {expected})")]
    SchemaVersion {
        path: String,
        found: u32,
        expected: u32,
    },
}

/// Write atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn check_version(path: &Path, found: u32) -> Result<(), ArtifactError> {
    if found != ARTIFACT_SCHEMA_VERSION {
        return Err(ArtifactError::SchemaVersion {
            path: path.display().to_string(),
            found,
            expected: ARTIFACT_SCHEMA_VERSION,
        });
    }
    Ok(())
}

// ── pool.jsonl ──────────────────────────────────────────────────────────────

/// Parse one pool line; exposed for fuzzing.
pub fn pool_entry_from_str(line: &str) -> Result<Rubric, serde_json::Error> {
    serde_json::from_str(line)
}

pub fn save_pool(path: &Path, pool: &RubricPool) -> Result<(), ArtifactError> {
    let mut out = String::new();
    for rubric in &pool.rubrics {
        let line = crate::json17::to_string_17(rubric).map_err(|e| ArtifactError::Malformed {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        out.push_str(&line);
        out.push('\n');
    }
    atomic_write(path, out.as_bytes()).map_err(io_err(path))
}

pub fn load_pool(path: &Path) -> Result<RubricPool, ArtifactError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut rubrics = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rubric = pool_entry_from_str(line).map_err(|e| ArtifactError::PoolLine {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        rubrics.push(rubric);
    }
    Ok(RubricPool { rubrics })
}

// ── core.json ───────────────────────────────────────────────────────────────

/// The core-set artifact: the selection outcome plus the batch-level gain
/// history of the run that produced it (empty for standalone selections).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CoreDocument {
    pub schema_version: u32,
    pub rubric_ids: Vec<String>,
    pub trace: SelectionTrace,
    pub epsilon_used: f64,
    pub batch_gain_history: Vec<f64>,
}

impl CoreDocument {
    pub fn new(core: &CoreSet, batch_gain_history: Vec<f64>) -> Self {
        Self {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            rubric_ids: core.rubric_ids.clone(),
            trace: core.trace.clone(),
            epsilon_used: core.epsilon_used,
            batch_gain_history,
        }
    }

    pub fn core(&self) -> CoreSet {
        CoreSet {
            rubric_ids: self.rubric_ids.clone(),
            trace: self.trace.clone(),
            epsilon_used: self.epsilon_used,
        }
    }
}

/// Parse a core document; exposed for fuzzing.
pub fn core_document_from_str(text: &str) -> Result<CoreDocument, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn save_core(path: &Path, doc: &CoreDocument) -> Result<(), ArtifactError> {
    let body = crate::json17::to_string_17(doc).map_err(|e| ArtifactError::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    atomic_write(path, body.as_bytes()).map_err(io_err(path))
}

pub fn load_core(path: &Path) -> Result<CoreDocument, ArtifactError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let doc = core_document_from_str(&text).map_err(|e| ArtifactError::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    check_version(path, doc.schema_version)?;
    Ok(doc)
}

// ── rubrics.json ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RubricsDocument {
    pub schema_version: u32,
    pub themes: ThemeTipsRubric,
}

impl RubricsDocument {
    pub fn new(themes: ThemeTipsRubric) -> Self {
        Self {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            themes,
        }
    }
}

pub fn save_rubrics(path: &Path, doc: &RubricsDocument) -> Result<(), ArtifactError> {
    let body = serde_json::to_string_pretty(doc).map_err(|e| ArtifactError::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    atomic_write(path, body.as_bytes()).map_err(io_err(path))
}

pub fn load_rubrics(path: &Path) -> Result<RubricsDocument, ArtifactError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let doc: RubricsDocument =
        serde_json::from_str(&text).map_err(|e| ArtifactError::Malformed {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    check_version(path, doc.schema_version)?;
    Ok(doc)
}

// ── run_report.json ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunReport {
    pub schema_version: u32,
    pub stop_reason: PipelineStopReason,
    pub iterations: usize,
    pub pairs_processed: usize,
    pub validated_pairs: usize,
    pub failed_pairs: usize,
    pub pool_size: usize,
    pub core_size: usize,
    pub batch_gain_history: Vec<f64>,
    pub pair_errors: Vec<PairError>,
}

pub fn save_report(path: &Path, report: &RunReport) -> Result<(), ArtifactError> {
    let body = crate::json17::to_string_17(report).map_err(|e| ArtifactError::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    atomic_write(path, body.as_bytes()).map_err(io_err(path))
}

pub fn load_report(path: &Path) -> Result<RunReport, ArtifactError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let report: RunReport = serde_json::from_str(&text).map_err(|e| ArtifactError::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    check_version(path, report.schema_version)?;
    Ok(report)
}

// ── trace CSV export ────────────────────────────────────────────────────────

/// Per-pick selection trace, one row per accepted step (1-based).
pub fn trace_csv(trace: &SelectionTrace) -> String {
    let mut out = String::from("step,rubric_id,marginal_gain,coding_rate_after\n");
    for (i, pick) in trace.picks.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            pick.rubric_id,
            pick.marginal_gain,
            pick.coding_rate_after
        ));
    }
    out
}

/// Batch-level gain history, one row per batch iteration (1-based).
pub fn batch_gains_csv(history: &[f64]) -> String {
    let mut out = String::from("batch,gain\n");
    for (i, gain) in history.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, gain));
    }
    out
}
