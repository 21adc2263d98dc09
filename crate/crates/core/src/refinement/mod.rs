//! Query-specific rubric generation: the propose-evaluate-revise loop.
//!
//! For each preference pair, a proposal prompt drafts candidate rubrics, a
//! judging prompt verifies that they pick the labeled winner, and failed
//! sets are revised with the previous round as negative feedback, up to a
//! bounded number of epochs. Only validated sets feed the rubric pool.

pub mod parse;
pub mod prompts;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ChatBackend, ChatRequest, ClientError};
use crate::hashing::{content_hash, seeded_coin};
use crate::theme_tips::ThemeTipsRubric;
use parse::{parse_preference, parse_rubrics_block};
use prompts::{render_flat_rubrics, render_judge, render_propose, render_revise, Presentation};

/// Default sampling temperature for proposal and revision.
pub const GENERATION_TEMPERATURE: f64 = 0.7;
/// Judging is greedy so verdicts are as deterministic as the backend allows.
pub const JUDGE_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("rubric generation failed: {0}")]
    Generation(String),
    #[error("judgment failed: {0}")]
    Judgment(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// Which side of a preference pair the annotator labeled better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreferredSide {
    A,
    B,
}

impl PreferredSide {
    pub fn as_verdict(self) -> Verdict {
        match self {
            PreferredSide::A => Verdict::A,
            PreferredSide::B => Verdict::B,
        }
    }
}

/// One labeled comparison: the unit of refinement.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PreferencePair {
    pub id: String,
    /// May embed prior conversation turns.
    pub query: String,
    pub response_a: String,
    pub response_b: String,
    pub preferred: PreferredSide,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critique: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    A,
    B,
    Tie,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::A => write!(f, "A"),
            Verdict::B => write!(f, "B"),
            Verdict::Tie => write!(f, "Tie"),
        }
    }
}

impl Verdict {
    /// Map a verdict issued under a swapped presentation back to dataset
    /// coordinates.
    pub fn unswap(self, swapped: bool) -> Verdict {
        if !swapped {
            return self;
        }
        match self {
            Verdict::A => Verdict::B,
            Verdict::B => Verdict::A,
            Verdict::Tie => Verdict::Tie,
        }
    }
}

/// One judging call: parsed verdict plus the raw model text it came from.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Judgment {
    pub verdict: Verdict,
    pub raw_response: String,
}

/// A single natural-language criterion with provenance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Rubric {
    /// Stable content hash of the text.
    pub id: String,
    pub text: String,
    pub source_pair_id: String,
    /// Query of the source pair, carried along for structuring.
    pub source_query: String,
    pub batch_iteration: u32,
    /// Epochs consumed before this rubric's set validated.
    pub refine_iterations: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl Rubric {
    pub fn new(
        text: impl Into<String>,
        source_pair_id: impl Into<String>,
        source_query: impl Into<String>,
        batch_iteration: u32,
        refine_iterations: u32,
    ) -> Self {
        let text = text.into();
        Self {
            id: content_hash(&text),
            text,
            source_pair_id: source_pair_id.into(),
            source_query: source_query.into(),
            batch_iteration,
            refine_iterations,
            embedding: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementStatus {
    /// The final judgment matched the labeled preference.
    Validated,
    /// Every epoch's judgment failed the quality gate.
    Failed,
}

/// Result of refining one pair.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RefinementOutcome {
    pub pair_id: String,
    pub status: RefinementStatus,
    pub rubrics: Vec<Rubric>,
    pub iterations_used: u32,
    pub judgment_history: Vec<Judgment>,
}

/// Rubrics in the form a judging prompt accepts.
#[derive(Debug, Clone)]
pub enum JudgeRubrics<'a> {
    Flat(&'a [String]),
    Structured(&'a ThemeTipsRubric),
}

impl JudgeRubrics<'_> {
    pub fn render_block(&self) -> String {
        match self {
            JudgeRubrics::Flat(texts) => render_flat_rubrics(texts),
            JudgeRubrics::Structured(rubric) => rubric.render_block(),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            JudgeRubrics::Flat(texts) => texts.is_empty(),
            JudgeRubrics::Structured(rubric) => rubric.themes.is_empty(),
        }
    }
}

/// Knobs of the refinement loop.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct RefineOptions {
    /// Maximum number of judged epochs per pair.
    pub e_max: u32,
    /// Cap on rubrics per generation.
    pub max_rubrics: usize,
    /// Seed for the per-pair presentation-order flip.
    pub seed: u64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            e_max: 10,
            max_rubrics: 5,
            seed: 0,
        }
    }
}

/// Seeded presentation flip for a pair: stable across runs for a given seed.
pub fn presentation_for(seed: u64, pair_id: &str) -> Presentation {
    Presentation {
        swap: seeded_coin(seed, &[b"presentation", pair_id.as_bytes()]),
    }
}

/// Send a generation prompt and parse its rubric list, with one automatic
/// re-ask on unparseable output. Truncates to `max_rubrics` with a warning.
fn ask_rubrics(
    prompt: &str,
    max_rubrics: usize,
    backend: &dyn ChatBackend,
) -> Result<Vec<String>, RefineError> {
    let request = ChatRequest::user_prompt(prompt, GENERATION_TEMPERATURE);
    let mut last_err = None;
    for _ in 0..2 {
        let response = backend.chat(&request)?;
        match parse_rubrics_block(&response.content) {
            Ok(mut rubrics) => {
                if rubrics.len() > max_rubrics {
                    log::warn!(
                        "generation returned {} rubrics, truncating to {max_rubrics}",
                        rubrics.len()
                    );
                    rubrics.truncate(max_rubrics);
                }
                return Ok(rubrics);
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(RefineError::Generation(format!(
        "unparseable after re-ask: {}",
        last_err.expect("loop ran")
    )))
}

/// Draft an initial rubric set for a pair.
pub fn propose(
    pair: &PreferencePair,
    max_rubrics: usize,
    backend: &dyn ChatBackend,
    presentation: Presentation,
) -> Result<Vec<String>, RefineError> {
    if max_rubrics < 1 {
        return Err(RefineError::Precondition("max_rubrics must be >= 1".into()));
    }
    let prompt = render_propose(pair, max_rubrics, presentation);
    ask_rubrics(&prompt, max_rubrics, backend)
}

/// Revise a failed rubric set using the previous round as feedback.
pub fn revise(
    pair: &PreferencePair,
    failed_rubrics: &[String],
    max_rubrics: usize,
    backend: &dyn ChatBackend,
    presentation: Presentation,
) -> Result<Vec<String>, RefineError> {
    if failed_rubrics.is_empty() {
        return Err(RefineError::Precondition(
            "revise requires a non-empty failed rubric set".into(),
        ));
    }
    let prompt = render_revise(pair, failed_rubrics, max_rubrics, presentation);
    ask_rubrics(&prompt, max_rubrics, backend)
}

/// Judge a pair of responses under a rubric set.
///
/// The verdict is parsed from the last preference tag, case-insensitively,
/// with one automatic re-ask on unparseable output. The verdict refers to
/// the responses exactly as passed (A = first).
pub fn judge(
    query: &str,
    response_a: &str,
    response_b: &str,
    rubrics: &JudgeRubrics<'_>,
    backend: &dyn ChatBackend,
) -> Result<Judgment, RefineError> {
    if rubrics.is_empty() {
        return Err(RefineError::Precondition(
            "judge requires a non-empty rubric set".into(),
        ));
    }
    judge_block(query, response_a, response_b, &rubrics.render_block(), backend)
}

/// [`judge`] with an already-serialized rubrics block.
pub fn judge_block(
    query: &str,
    response_a: &str,
    response_b: &str,
    rubrics_block: &str,
    backend: &dyn ChatBackend,
) -> Result<Judgment, RefineError> {
    let prompt = render_judge(rubrics_block, query, response_a, response_b);
    let request = ChatRequest::user_prompt(&prompt, JUDGE_TEMPERATURE);
    let mut last_raw = String::new();
    for _ in 0..2 {
        let response = backend.chat(&request)?;
        match parse_preference(&response.content) {
            Ok(verdict) => {
                return Ok(Judgment {
                    verdict,
                    raw_response: response.content,
                })
            }
            Err(_) => last_raw = response.content,
        }
    }
    Err(RefineError::Judgment(format!(
        "no parseable verdict after re-ask; last response: {:.80}",
        last_raw
    )))
}

/// Run the full propose-evaluate-revise loop for one pair.
///
/// Epoch 1 proposes and judges; epochs 2..=e_max revise the previous failed
/// set and judge again. The loop ends at the first judgment matching the
/// labeled preference (validated) or after `e_max` judgments (failed). Tie
/// verdicts count as failures.
pub fn refine_pair(
    pair: &PreferencePair,
    options: &RefineOptions,
    backend: &dyn ChatBackend,
) -> Result<RefinementOutcome, RefineError> {
    if options.e_max < 1 {
        return Err(RefineError::Precondition("e_max must be >= 1".into()));
    }
    let presentation = presentation_for(options.seed, &pair.id);
    let (shown_a, shown_b) = presentation.arranged(pair);
    let mut current = propose(pair, options.max_rubrics, backend, presentation)?;
    let mut history: Vec<Judgment> = Vec::new();

    for epoch in 1..=options.e_max {
        if epoch > 1 {
            current = revise(pair, &current, options.max_rubrics, backend, presentation)?;
        }
        let judged = judge(
            &pair.query,
            shown_a,
            shown_b,
            &JudgeRubrics::Flat(&current),
            backend,
        )?;
        let canonical = judged.verdict.unswap(presentation.swap);
        history.push(Judgment {
            verdict: canonical,
            raw_response: judged.raw_response,
        });
        if canonical == pair.preferred.as_verdict() {
            let rubrics = current
                .iter()
                .map(|text| Rubric::new(text, &pair.id, &pair.query, 0, epoch))
                .collect();
            return Ok(RefinementOutcome {
                pair_id: pair.id.clone(),
                status: RefinementStatus::Validated,
                rubrics,
                iterations_used: epoch,
                judgment_history: history,
            });
        }
    }

    Ok(RefinementOutcome {
        pair_id: pair.id.clone(),
        status: RefinementStatus::Failed,
        rubrics: Vec::new(),
        iterations_used: options.e_max,
        judgment_history: history,
    })
}
