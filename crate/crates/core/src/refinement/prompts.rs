//! Prompt templates and rendering.
//!
//! The four templates ship as embedded text assets and are rendered by pure
//! placeholder substitution, so the emitted prompts are byte-identical to the
//! assets modulo the substituted values. Substitution is single-pass:
//! placeholder-like text inside user data is never re-expanded.

use super::{PreferencePair, PreferredSide};

pub const PROPOSE_TEMPLATE: &str = include_str!("templates/propose.txt");
pub const JUDGE_TEMPLATE: &str = include_str!("templates/judge.txt");
pub const REVISE_TEMPLATE: &str = include_str!("templates/revise.txt");
pub const STRUCTURE_TEMPLATE: &str = include_str!("templates/structure.txt");

/// Single-pass substitution of known `{name}` placeholders. Unknown braces
/// pass through untouched and substituted values are never re-scanned.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        if let Some(end) = after.find('}') {
            let name = &after[..end];
            if let Some((_, v)) = values.iter().find(|(k, _)| *k == name) {
                out.push_str(&rest[..start]);
                out.push_str(v);
                rest = &after[end + 1..];
                continue;
            }
        }
        out.push_str(&rest[..=start]);
        rest = &rest[start + 1..];
    }
    out.push_str(rest);
    out
}

/// How the two responses are laid out in a prompt. `swap` presents the
/// dataset's response B first, to avoid teaching a position bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Presentation {
    pub swap: bool,
}

impl Presentation {
    pub fn arranged<'a>(&self, pair: &'a PreferencePair) -> (&'a str, &'a str) {
        if self.swap {
            (&pair.response_b, &pair.response_a)
        } else {
            (&pair.response_a, &pair.response_b)
        }
    }

    /// 1-based slot of the preferred response under this presentation.
    pub fn preferred_slot(&self, pair: &PreferencePair) -> u8 {
        match (pair.preferred, self.swap) {
            (PreferredSide::A, false) | (PreferredSide::B, true) => 1,
            (PreferredSide::A, true) | (PreferredSide::B, false) => 2,
        }
    }
}

pub fn render_propose(
    pair: &PreferencePair,
    max_rubrics: usize,
    presentation: Presentation,
) -> String {
    let (answer_1, answer_2) = presentation.arranged(pair);
    let number = max_rubrics.to_string();
    let preference = presentation.preferred_slot(pair).to_string();
    let critic = pair.critique.as_deref().unwrap_or("");
    fill(
        PROPOSE_TEMPLATE,
        &[
            ("number", &number),
            ("query", &pair.query),
            ("answer_1", answer_1),
            ("answer_2", answer_2),
            ("preference", &preference),
            ("critic", critic),
        ],
    )
}

pub fn render_revise(
    pair: &PreferencePair,
    previous_rubrics: &[String],
    max_rubrics: usize,
    presentation: Presentation,
) -> String {
    let (answer_1, answer_2) = presentation.arranged(pair);
    let number = max_rubrics.to_string();
    let preference = presentation.preferred_slot(pair).to_string();
    let previous = previous_rubrics.join("\n");
    fill(
        REVISE_TEMPLATE,
        &[
            ("number", &number),
            ("query", &pair.query),
            ("answer_1", answer_1),
            ("answer_2", answer_2),
            ("preference", &preference),
            ("previous_rubric_1", &previous),
        ],
    )
}

pub fn render_judge(rubrics_block: &str, query: &str, response_a: &str, response_b: &str) -> String {
    fill(
        JUDGE_TEMPLATE,
        &[
            ("rubrics", rubrics_block),
            ("query", query),
            ("response_a", response_a),
            ("response_b", response_b),
        ],
    )
}

/// One structuring input: a validated rubric with its source query.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureExample {
    pub query: String,
    pub suggestion: String,
}

/// Render the structuring prompt: the template with its rubric-count limit
/// set to `theme_count`, followed by the example blocks. With the default
/// count of 5 the template section is byte-identical to the shipped asset.
pub fn render_structure(examples: &[StructureExample], theme_count: usize) -> String {
    let template = STRUCTURE_TEMPLATE.replace(
        "rubrics should be LESS THAN OR EQUAL TO 5",
        &format!("rubrics should be LESS THAN OR EQUAL TO {theme_count}"),
    );
    let mut out = template;
    out.push_str("\n## Examples\n");
    for (i, ex) in examples.iter().enumerate() {
        let n = i + 1;
        out.push_str(&format!(
            "<example_{n}>\n<query>\n{}\n</query>\n<suggestion>\n{}\n</suggestion>\n</example_{n}>\n",
            ex.query, ex.suggestion
        ));
    }
    out
}

/// Flat rubric serialization for the judging prompt: one criterion per line.
pub fn render_flat_rubrics(texts: &[String]) -> String {
    texts.join("\n")
}
