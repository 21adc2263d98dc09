//! The structured rubric hierarchy: up to k themes, each with 1..=5 tips.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on tips per theme, fixed by the structuring prompt contract.
pub const MAX_TIPS_PER_THEME: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ThemeTipsError {
    #[error("no themes found")]
    NoThemes,
    #[error("line {line}: tip appears before any theme")]
    TipBeforeTheme { line: usize },
    #[error("line {line}: unrecognized line {content:?}")]
    UnrecognizedLine { line: usize, content: String },
    #[error("line {line}: empty {what} text")]
    EmptyText { line: usize, what: &'static str },
    #[error("{got} themes exceed the limit of {limit}")]
    TooManyThemes { got: usize, limit: usize },
    #[error("theme {theme} has {got} tips, limit is {MAX_TIPS_PER_THEME}")]
    TooManyTips { theme: usize, got: usize },
    #[error("theme {theme} has no tips")]
    NoTips { theme: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Theme {
    /// One-sentence statement applicable to every query.
    pub theme: String,
    /// Specific guidance for narrower query families.
    pub tips: Vec<String>,
}

/// The final query-agnostic rubric artifact.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ThemeTipsRubric {
    pub themes: Vec<Theme>,
}

impl ThemeTipsRubric {
    /// Serialize for inclusion in a judging prompt:
    /// `Theme:` line followed by `-Tip n:` lines, themes separated by a
    /// blank line.
    pub fn render_block(&self) -> String {
        let mut out = String::new();
        for (i, theme) in self.themes.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            out.push_str(&format!("Theme: {}", theme.theme));
            for (j, tip) in theme.tips.iter().enumerate() {
                out.push_str(&format!("\n-Tip {}: {}", j + 1, tip));
            }
        }
        out
    }

    /// Check cardinality bounds: 1..=`theme_count` themes, 1..=5 non-empty
    /// tips per theme.
    pub fn validate(&self, theme_count: usize) -> Result<(), ThemeTipsError> {
        if self.themes.is_empty() {
            return Err(ThemeTipsError::NoThemes);
        }
        if self.themes.len() > theme_count {
            return Err(ThemeTipsError::TooManyThemes {
                got: self.themes.len(),
                limit: theme_count,
            });
        }
        for (i, theme) in self.themes.iter().enumerate() {
            if theme.theme.trim().is_empty() {
                return Err(ThemeTipsError::EmptyText {
                    line: 0,
                    what: "theme",
                });
            }
            if theme.tips.is_empty() {
                return Err(ThemeTipsError::NoTips { theme: i + 1 });
            }
            if theme.tips.len() > MAX_TIPS_PER_THEME {
                return Err(ThemeTipsError::TooManyTips {
                    theme: i + 1,
                    got: theme.tips.len(),
                });
            }
            if theme.tips.iter().any(|t| t.trim().is_empty()) {
                return Err(ThemeTipsError::EmptyText {
                    line: 0,
                    what: "tip",
                });
            }
        }
        Ok(())
    }
}

/// Parse the inner text of a structuring response into themes and tips.
///
/// Recognized lines: `Theme: <text>` starts a theme, `-Tip n: <text>` (a
/// space after the dash is tolerated) appends a tip to the current theme.
/// Blank lines separate themes; anything else is an error. Bounds are NOT
/// checked here; callers apply [`ThemeTipsRubric::validate`].
pub fn parse_theme_tips(block: &str) -> Result<ThemeTipsRubric, ThemeTipsError> {
    let mut themes: Vec<Theme> = Vec::new();
    for (idx, raw_line) in block.lines().enumerate() {
        let line = raw_line.trim();
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("Theme:") {
            let text = rest.trim();
            if text.is_empty() {
                return Err(ThemeTipsError::EmptyText {
                    line: line_no,
                    what: "theme",
                });
            }
            themes.push(Theme {
                theme: text.to_string(),
                tips: Vec::new(),
            });
            continue;
        }
        if let Some(tip) = parse_tip_line(line) {
            let tip = tip.trim();
            if tip.is_empty() {
                return Err(ThemeTipsError::EmptyText {
                    line: line_no,
                    what: "tip",
                });
            }
            match themes.last_mut() {
                Some(theme) => theme.tips.push(tip.to_string()),
                None => return Err(ThemeTipsError::TipBeforeTheme { line: line_no }),
            }
            continue;
        }
        return Err(ThemeTipsError::UnrecognizedLine {
            line: line_no,
            content: line.chars().take(80).collect(),
        });
    }
    if themes.is_empty() {
        return Err(ThemeTipsError::NoThemes);
    }
    Ok(ThemeTipsRubric { themes })
}

/// `-Tip 3: text` / `- Tip: text` → `Some("text")`.
fn parse_tip_line(line: &str) -> Option<&str> {
    let rest = line.strip_prefix('-')?.trim_start();
    let rest = rest.strip_prefix("Tip")?;
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_digit() || c == ' ');
    rest.strip_prefix(':')
}
