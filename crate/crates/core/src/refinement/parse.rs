//! Parsers for tagged model output.
//!
//! Model responses are untrusted text; every parser here either returns a
//! well-formed value or a typed error, and must never panic on arbitrary
//! input (the fuzz targets hold them to that).

use thiserror::Error;

use super::Verdict;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("no <{0}> block found in response")]
    MissingBlock(&'static str),
    #[error("<{0}> block is empty")]
    EmptyBlock(&'static str),
    #[error("no parseable verdict in response")]
    MissingVerdict,
}

/// First `<tag>…</tag>` block, case-insensitive on the tag.
pub fn extract_tag_block<'a>(raw: &'a str, tag: &str) -> Option<&'a str> {
    find_tag_blocks(raw, tag).next()
}

/// Last `<tag>…</tag>` block, case-insensitive on the tag.
pub fn extract_last_tag_block<'a>(raw: &'a str, tag: &str) -> Option<&'a str> {
    find_tag_blocks(raw, tag).last()
}

/// ASCII-case-insensitive substring search on the raw bytes. Searching the
/// original string (rather than a lowercased copy) keeps byte offsets valid:
/// Unicode lowercasing can change string length, and a match of an
/// all-ASCII needle always sits on char boundaries.
fn find_ascii_ci(haystack: &str, needle: &str, from: usize) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.is_empty() || h.len() < n.len() || from > h.len() - n.len() {
        return None;
    }
    (from..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

fn find_tag_blocks<'a>(raw: &'a str, tag: &str) -> impl Iterator<Item = &'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut from = 0usize;
    let mut blocks = Vec::new();
    while let Some(start) = find_ascii_ci(raw, &open, from) {
        let content_start = start + open.len();
        match find_ascii_ci(raw, &close, content_start) {
            Some(end) => {
                blocks.push(&raw[content_start..end]);
                from = end + close.len();
            }
            None => break,
        }
    }
    blocks.into_iter()
}

/// Parse the `<rubrics>` block of a generation/revision response into one
/// criterion per non-empty line, with bullet and numbering prefixes stripped.
///
/// Returns the full list; callers enforce any count cap.
pub fn parse_rubrics_block(raw: &str) -> Result<Vec<String>, ParseError> {
    let block = extract_tag_block(raw, "rubrics").ok_or(ParseError::MissingBlock("rubrics"))?;
    let rubrics: Vec<String> = block
        .lines()
        .map(strip_list_marker)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if rubrics.is_empty() {
        return Err(ParseError::EmptyBlock("rubrics"));
    }
    Ok(rubrics)
}

/// Remove a leading bullet (`-`, `*`, `•`) or numbering (`1.`, `2)`, `(3)`)
/// and surrounding whitespace.
pub fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    let stripped = if let Some(rest) = line
        .strip_prefix('-')
        .or_else(|| line.strip_prefix('*'))
        .or_else(|| line.strip_prefix('•'))
    {
        rest
    } else if let Some(rest) = strip_numbering(line) {
        rest
    } else {
        line
    };
    stripped.trim()
}

fn strip_numbering(line: &str) -> Option<&str> {
    // "(3) text" form.
    if let Some(rest) = line.strip_prefix('(') {
        let digits = rest.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits > 0 {
            if let Some(after) = rest[digits..].strip_prefix(')') {
                return Some(after);
            }
        }
        return None;
    }
    // "3. text" / "3) text" forms.
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return None;
    }
    line[digits..]
        .strip_prefix('.')
        .or_else(|| line[digits..].strip_prefix(')'))
}

/// Parse the last `<preference>` tag, case-insensitively, into a verdict.
pub fn parse_preference(raw: &str) -> Result<Verdict, ParseError> {
    let block = extract_last_tag_block(raw, "preference").ok_or(ParseError::MissingVerdict)?;
    match block.trim().to_lowercase().as_str() {
        "a" => Ok(Verdict::A),
        "b" => Ok(Verdict::B),
        "tie" => Ok(Verdict::Tie),
        _ => Err(ParseError::MissingVerdict),
    }
}
