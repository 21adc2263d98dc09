//! Per-rubric utility analysis over a labeled test set.
//!
//! Three metrics per rubric: coverage (how often it discriminates at all),
//! precision (how often a discriminating verdict is right), and contribution
//! (the accuracy drop when it is removed from the full set). Works on flat
//! rubric lists and on theme/tips hierarchies, where the unit of analysis is
//! one theme with its tips.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::ChatBackend;
use crate::hashing::seeded_coin;
use crate::refinement::{judge_block, PreferencePair, Verdict};
use crate::theme_tips::ThemeTipsRubric;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Labeled pairs used for evaluation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TestSet {
    pairs: Vec<PreferencePair>,
}

impl TestSet {
    pub fn new(pairs: Vec<PreferencePair>) -> Result<Self, DiagnosticsError> {
        if pairs.is_empty() {
            return Err(DiagnosticsError::InvalidInput("test set is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &pairs {
            if !seen.insert(p.id.clone()) {
                return Err(DiagnosticsError::InvalidInput(format!(
                    "duplicate pair id {}",
                    p.id
                )));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[PreferencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Majority-vote settings for accuracy evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct VotingConfig {
    pub n_votes: usize,
    pub seed: u64,
}

impl Default for VotingConfig {
    fn default() -> Self {
        Self { n_votes: 1, seed: 0 }
    }
}

impl VotingConfig {
    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        if self.n_votes < 1 {
            return Err(DiagnosticsError::InvalidInput("n_votes must be >= 1".into()));
        }
        Ok(())
    }
}

/// One rubric (or theme) under analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticUnit {
    pub id: String,
    /// Human-readable label for reports.
    pub label: String,
    /// Text inserted into the judging prompt's rubrics slot.
    pub block: String,
}

/// A set of units plus how their blocks concatenate in a full-set prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticSet {
    units: Vec<DiagnosticUnit>,
    separator: &'static str,
}

impl DiagnosticSet {
    /// Flat rubric texts: one unit per criterion, one line each.
    pub fn from_texts(texts: &[String]) -> Result<Self, DiagnosticsError> {
        if texts.is_empty() {
            return Err(DiagnosticsError::InvalidInput("no rubrics given".into()));
        }
        Ok(Self {
            units: texts
                .iter()
                .map(|t| DiagnosticUnit {
                    id: crate::hashing::content_hash(t),
                    label: t.clone(),
                    block: t.clone(),
                })
                .collect(),
            separator: "\n",
        })
    }

    /// Theme/tips hierarchy: one unit per theme, rendered with its tips.
    pub fn from_theme_tips(rubric: &ThemeTipsRubric) -> Result<Self, DiagnosticsError> {
        if rubric.themes.is_empty() {
            return Err(DiagnosticsError::InvalidInput("no themes given".into()));
        }
        Ok(Self {
            units: rubric
                .themes
                .iter()
                .enumerate()
                .map(|(i, theme)| {
                    let single = ThemeTipsRubric {
                        themes: vec![theme.clone()],
                    };
                    DiagnosticUnit {
                        id: format!("theme-{}", i + 1),
                        label: theme.theme.clone(),
                        block: single.render_block(),
                    }
                })
                .collect(),
            separator: "\n\n",
        })
    }

    pub fn units(&self) -> &[DiagnosticUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    fn block_excluding(&self, skip: Option<&str>) -> String {
        self.units
            .iter()
            .filter(|u| Some(u.id.as_str()) != skip)
            .map(|u| u.block.as_str())
            .collect::<Vec<_>>()
            .join(self.separator)
    }
}

/// Per-rubric metric triple.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RubricDiagnostics {
    pub rubric_id: String,
    /// Fraction of test pairs with a non-tie verdict, in [0, 1].
    pub coverage: f64,
    /// Correct fraction among non-tie verdicts; `None` when coverage is 0.
    pub precision: Option<f64>,
    /// Full-set accuracy minus leave-one-out accuracy, in [-1, 1].
    pub contribution: f64,
}

/// Presentation flip for one (pair, vote) slot, seeded so paired comparisons
/// across rubric subsets see identical orderings.
pub fn vote_flip(seed: u64, pair_id: &str, vote: usize) -> bool {
    seeded_coin(
        seed,
        &[b"vote", pair_id.as_bytes(), &(vote as u64).to_le_bytes()],
    )
}

/// One canonical-coordinate verdict for a pair under a rubric block.
/// Judgment failures degrade to a logged tie rather than aborting the pass.
fn judged_verdict(
    block: &str,
    pair: &PreferencePair,
    flip: bool,
    backend: &dyn ChatBackend,
) -> Verdict {
    let (a, b) = if flip {
        (&pair.response_b, &pair.response_a)
    } else {
        (&pair.response_a, &pair.response_b)
    };
    match judge_block(&pair.query, a, b, block, backend) {
        Ok(judgment) => judgment.verdict.unswap(flip),
        Err(e) => {
            log::warn!("judgment for pair {} degraded to tie: {e}", pair.id);
            Verdict::Tie
        }
    }
}

fn singleton_verdicts(
    unit: &DiagnosticUnit,
    test: &TestSet,
    seed: u64,
    backend: &dyn ChatBackend,
) -> Vec<Verdict> {
    test.pairs()
        .iter()
        .map(|p| judged_verdict(&unit.block, p, vote_flip(seed, &p.id, 0), backend))
        .collect()
}

/// Fraction of test pairs where the rubric alone yields a non-tie verdict.
pub fn coverage(unit: &DiagnosticUnit, test: &TestSet, seed: u64, backend: &dyn ChatBackend) -> f64 {
    let verdicts = singleton_verdicts(unit, test, seed, backend);
    let discriminative = verdicts.iter().filter(|v| **v != Verdict::Tie).count();
    discriminative as f64 / test.len() as f64
}

/// Among non-tie singleton verdicts, the fraction matching the label.
/// `None` when every verdict was a tie.
pub fn precision(
    unit: &DiagnosticUnit,
    test: &TestSet,
    seed: u64,
    backend: &dyn ChatBackend,
) -> Option<f64> {
    let verdicts = singleton_verdicts(unit, test, seed, backend);
    precision_of(&verdicts, test)
}

fn precision_of(verdicts: &[Verdict], test: &TestSet) -> Option<f64> {
    let mut non_tie = 0usize;
    let mut correct = 0usize;
    for (v, p) in verdicts.iter().zip(test.pairs()) {
        if *v == Verdict::Tie {
            continue;
        }
        non_tie += 1;
        if *v == p.preferred.as_verdict() {
            correct += 1;
        }
    }
    (non_tie > 0).then(|| correct as f64 / non_tie as f64)
}

/// Strict majority verdict; `None` on a tied vote count.
fn majority(verdicts: &[Verdict]) -> Option<Verdict> {
    let count = |target: Verdict| verdicts.iter().filter(|v| **v == target).count();
    let (a, b, t) = (count(Verdict::A), count(Verdict::B), count(Verdict::Tie));
    let max = a.max(b).max(t);
    let winners = [(Verdict::A, a), (Verdict::B, b), (Verdict::Tie, t)]
        .into_iter()
        .filter(|(_, c)| *c == max)
        .count();
    if winners != 1 {
        return None;
    }
    [(Verdict::A, a), (Verdict::B, b), (Verdict::Tie, t)]
        .into_iter()
        .find(|(_, c)| *c == max)
        .map(|(v, _)| v)
    }

fn accuracy_excluding(
    set: &DiagnosticSet,
    skip: Option<&str>,
    test: &TestSet,
    voting: &VotingConfig,
    backend: &dyn ChatBackend,
) -> (f64, usize) {
    let block = set.block_excluding(skip);
    let mut correct = 0usize;
    let mut judgments = 0usize;
    for pair in test.pairs() {
        let verdicts: Vec<Verdict> = (0..voting.n_votes)
            .map(|vote| judged_verdict(&block, pair, vote_flip(voting.seed, &pair.id, vote), backend))
            .collect();
        judgments += verdicts.len();
        // Vote ties and majority-tie both score zero.
        if majority(&verdicts) == Some(pair.preferred.as_verdict()) {
            correct += 1;
        }
    }
    (correct as f64 / test.len() as f64, judgments)
}

/// Majority-vote accuracy of the whole rubric set over the test set.
pub fn set_accuracy(
    set: &DiagnosticSet,
    test: &TestSet,
    voting: &VotingConfig,
    backend: &dyn ChatBackend,
) -> Result<f64, DiagnosticsError> {
    voting.validate()?;
    if set.is_empty() {
        return Err(DiagnosticsError::InvalidInput("rubric set is empty".into()));
    }
    Ok(accuracy_excluding(set, None, test, voting, backend).0)
}

/// Accuracy drop when one rubric is removed, under identical vote seeds.
pub fn contribution(
    rubric_id: &str,
    set: &DiagnosticSet,
    test: &TestSet,
    voting: &VotingConfig,
    backend: &dyn ChatBackend,
) -> Result<f64, DiagnosticsError> {
    voting.validate()?;
    if !set.units.iter().any(|u| u.id == rubric_id) {
        return Err(DiagnosticsError::InvalidInput(format!(
            "rubric {rubric_id} is not in the set"
        )));
    }
    if set.len() < 2 {
        return Err(DiagnosticsError::InvalidInput(
            "contribution needs at least two rubrics".into(),
        ));
    }
    let (full, _) = accuracy_excluding(set, None, test, voting, backend);
    let (ablated, _) = accuracy_excluding(set, Some(rubric_id), test, voting, backend);
    Ok(full - ablated)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportRow {
    pub rubric_id: String,
    pub theme_excerpt: String,
    pub coverage: f64,
    pub precision: Option<f64>,
    pub contribution: f64,
}

/// Machine-readable diagnostics report; `render_table` gives the aligned
/// human-readable version.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiagnosticsReport {
    pub schema_version: u32,
    pub test_size: usize,
    pub n_votes: usize,
    pub full_set_accuracy: f64,
    pub rows: Vec<ReportRow>,
    /// Judge calls spent on leave-one-out evaluations; equals
    /// rubrics × test pairs × votes.
    pub leave_one_out_judgments: usize,
}

const EXCERPT_WIDTH: usize = 44;

impl DiagnosticsReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<EXCERPT_WIDTH$}  {:>12}  {:>13}  {:>22}\n",
            "Rubric", "Coverage (%)", "Precision (%)", "Contribution (Δ Acc %)"
        ));
        for row in &self.rows {
            let precision = match row.precision {
                Some(p) => format!("{:.2}", p * 100.0),
                None => "n/a".to_string(),
            };
            out.push_str(&format!(
                "{:<EXCERPT_WIDTH$}  {:>12.2}  {:>13}  {:>22.2}\n",
                row.theme_excerpt,
                row.coverage * 100.0,
                precision,
                row.contribution * 100.0
            ));
        }
        out
    }
}

fn excerpt(label: &str) -> String {
    if label.chars().count() <= EXCERPT_WIDTH {
        return label.to_string();
    }
    let head: String = label.chars().take(EXCERPT_WIDTH - 1).collect();
    format!("{head}…")
}

/// Run all three metrics for every unit and assemble the report.
pub fn diagnose_all(
    set: &DiagnosticSet,
    test: &TestSet,
    voting: &VotingConfig,
    backend: &dyn ChatBackend,
) -> Result<(Vec<RubricDiagnostics>, DiagnosticsReport), DiagnosticsError> {
    voting.validate()?;
    if set.len() < 2 {
        return Err(DiagnosticsError::InvalidInput(
            "diagnostics needs at least two rubrics (contribution is undefined otherwise)".into(),
        ));
    }
    let (full_accuracy, _) = accuracy_excluding(set, None, test, voting, backend);
    let mut diagnostics = Vec::with_capacity(set.len());
    let mut rows = Vec::with_capacity(set.len());
    let mut loo_judgments = 0usize;
    for unit in set.units() {
        let verdicts = singleton_verdicts(unit, test, voting.seed, backend);
        let non_tie = verdicts.iter().filter(|v| **v != Verdict::Tie).count();
        let coverage = non_tie as f64 / test.len() as f64;
        let precision = precision_of(&verdicts, test);
        let (ablated, judgments) = accuracy_excluding(set, Some(&unit.id), test, voting, backend);
        loo_judgments += judgments;
        let contribution = full_accuracy - ablated;
        diagnostics.push(RubricDiagnostics {
            rubric_id: unit.id.clone(),
            coverage,
            precision,
            contribution,
        });
        rows.push(ReportRow {
            rubric_id: unit.id.clone(),
            theme_excerpt: excerpt(&unit.label),
            coverage,
            precision,
            contribution,
        });
    }
    let report = DiagnosticsReport {
        schema_version: crate::artifacts::ARTIFACT_SCHEMA_VERSION,
        test_size: test.len(),
        n_votes: voting.n_votes,
        full_set_accuracy: full_accuracy,
        rows,
        leave_one_out_judgments: loo_judgments,
    };
    Ok((diagnostics, report))
}
