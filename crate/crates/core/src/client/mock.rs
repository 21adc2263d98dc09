//! Deterministic in-process backends for tests and offline runs.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ChatBackend, ChatRequest, ChatResponse, ClientError, EmbedBackend, Usage};
use crate::coding_rate::normalize;
use crate::hashing::seeded_u64;

enum Script {
    /// Replay responses strictly in order; error when exhausted.
    Sequence(VecDeque<String>),
    /// First rule whose needle appears in the prompt wins.
    Rules {
        rules: Vec<(String, String)>,
        fallback: Option<String>,
    },
}

/// Chat backend that replays a script deterministically.
pub struct ScriptedChatBackend {
    script: Mutex<Script>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedChatBackend {
    pub fn sequence<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: Mutex::new(Script::Sequence(
                responses.into_iter().map(Into::into).collect(),
            )),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn rules<I, S, T>(rules: I, fallback: Option<String>) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        Self {
            script: Mutex::new(Script::Rules {
                rules: rules.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
                fallback,
            }),
            prompts: Mutex::new(Vec::new()),
        }
    }

    /// Every prompt this backend has seen, in call order.
    pub fn recorded_prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("prompt log poisoned").clone()
    }
}

impl ChatBackend for ScriptedChatBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        request.validate()?;
        let prompt = request.last_user_content().to_string();
        self.prompts
            .lock()
            .expect("prompt log poisoned")
            .push(prompt.clone());
        let mut script = self.script.lock().expect("script poisoned");
        let content = match &mut *script {
            Script::Sequence(q) => q.pop_front().ok_or(ClientError::ScriptExhausted)?,
            Script::Rules { rules, fallback } => rules
                .iter()
                .find(|(needle, _)| prompt.contains(needle.as_str()))
                .map(|(_, resp)| resp.clone())
                .or_else(|| fallback.clone())
                .ok_or(ClientError::ScriptExhausted)?,
        };
        Ok(ChatResponse {
            content,
            usage: Usage::default(),
        })
    }
}

fn token_direction(seed: u64, token: &str, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeded_u64(seed, &[b"token", token.as_bytes()]));
    let raw: Vec<f64> = (0..dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    normalize(&raw).expect("gaussian direction is almost surely nonzero")
}

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Seeded random projection of token-count features.
///
/// Identical texts map to identical vectors, duplicated phrasing stays
/// collinear, and texts over disjoint vocabularies come out near-orthogonal
/// for reasonable dimensions.
pub struct HashProjectionEmbedder {
    seed: u64,
    dim: usize,
}

impl HashProjectionEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim >= 2, "embedding dimension must be at least 2");
        Self { seed, dim }
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in tokens(text) {
            *counts.entry(t).or_default() += 1;
        }
        let mut acc = vec![0.0; self.dim];
        if counts.is_empty() {
            return token_direction(self.seed, text, self.dim);
        }
        for (token, count) in counts {
            let dir = token_direction(self.seed, &token, self.dim);
            for (a, d) in acc.iter_mut().zip(dir) {
                *a += count as f64 * d;
            }
        }
        normalize(&acc).unwrap_or_else(|_| token_direction(self.seed, text, self.dim))
    }
}

impl EmbedBackend for HashProjectionEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
        if texts.is_empty() {
            return Err(ClientError::InvalidInput("no texts to embed".into()));
        }
        if let Some(i) = texts.iter().position(|t| t.is_empty()) {
            return Err(ClientError::InvalidInput(format!(
                "text at index {i} is empty"
            )));
        }
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn model_id(&self) -> String {
        format!("mock-hash-{}-{}", self.seed, self.dim)
    }
}

/// Embedder that maps each configured keyword to one coordinate axis.
///
/// A text containing the i-th keyword (first match in configured order)
/// embeds exactly to basis vector eᵢ, so keyword groups form perfectly
/// orthogonal clusters. Texts matching no keyword fall back to a hashed
/// direction.
pub struct KeywordAxisEmbedder {
    keywords: Vec<String>,
    dim: usize,
    fallback: HashProjectionEmbedder,
}

impl KeywordAxisEmbedder {
    pub fn new(keywords: Vec<String>, dim: usize, seed: u64) -> Result<Self, ClientError> {
        if keywords.is_empty() {
            return Err(ClientError::Config("keyword list must be non-empty".into()));
        }
        if keywords.len() > dim {
            return Err(ClientError::Config(format!(
                "{} keywords need dimension >= {}, got {dim}",
                keywords.len(),
                keywords.len()
            )));
        }
        Ok(Self {
            keywords: keywords.iter().map(|k| k.to_lowercase()).collect(),
            dim,
            fallback: HashProjectionEmbedder::new(seed, dim),
        })
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let lower = text.to_lowercase();
        for (i, kw) in self.keywords.iter().enumerate() {
            if lower.contains(kw.as_str()) {
                let mut v = vec![0.0; self.dim];
                v[i] = 1.0;
                return v;
            }
        }
        self.fallback.embed_one(text)
    }
}

impl EmbedBackend for KeywordAxisEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
        if texts.is_empty() {
            return Err(ClientError::InvalidInput("no texts to embed".into()));
        }
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn model_id(&self) -> String {
        format!("mock-axis-{}-{}", self.keywords.join("+"), self.dim)
    }
}

/// Rule-driven chat backend that can play every role in an extraction run.
///
/// It recognizes the pipeline's rendered prompts by their fixed markers and
/// answers deterministically:
/// - rubric generation/revision: emits two rubrics built from the query's
///   topic (the word after a `topic:` marker, else the first word);
/// - pairwise judging: prefers the longer response, tie on equal length;
/// - structuring: groups suggestion lines by their `about <topic>` token
///   into themes.
pub struct SyntheticChatBackend;

impl SyntheticChatBackend {
    pub fn new() -> Self {
        Self
    }

    fn extract_section<'a>(prompt: &'a str, header: &str) -> Option<&'a str> {
        let start = prompt.find(header)? + header.len();
        let rest = &prompt[start..];
        let end = rest.find("\n\n## ").unwrap_or(rest.len());
        Some(rest[..end].trim())
    }

    fn topic_of(query: &str) -> String {
        if let Some(idx) = query.find("topic:") {
            let rest = &query[idx + "topic:".len()..];
            let word: String = rest
                .chars()
                .take_while(|c| c.is_alphanumeric() || *c == '_' || *c == '-')
                .collect();
            if !word.is_empty() {
                return word.to_lowercase();
            }
        }
        tokens(query)
            .into_iter()
            .next()
            .unwrap_or_else(|| "general".to_string())
    }

    fn rubric_response(prompt: &str) -> String {
        let query = Self::extract_section(prompt, "## Query\n").unwrap_or("");
        let topic = Self::topic_of(query);
        format!(
            "<rubrics>Be accurate about {topic} and avoid fabricated claims\nCover {topic} with complete, well-organized detail</rubrics>"
        )
    }

    fn judge_response(prompt: &str) -> String {
        let a = Self::extract_section(prompt, "## Response A\n").unwrap_or("");
        let b = Self::extract_section(prompt, "## Response B\n").unwrap_or("");
        let verdict = match a.len().cmp(&b.len()) {
            std::cmp::Ordering::Greater => "A",
            std::cmp::Ordering::Less => "B",
            std::cmp::Ordering::Equal => "tie",
        };
        format!("<preference>{verdict}</preference>")
    }

    fn structure_response(prompt: &str) -> String {
        let mut suggestions = Vec::new();
        let mut rest = prompt;
        while let Some(start) = rest.find("<suggestion>") {
            rest = &rest[start + "<suggestion>".len()..];
            if let Some(end) = rest.find("</suggestion>") {
                suggestions.push(rest[..end].trim().to_string());
                rest = &rest[end..];
            } else {
                break;
            }
        }
        let mut by_topic: Vec<(String, Vec<String>)> = Vec::new();
        for s in &suggestions {
            let topic = s
                .find("about ")
                .map(|i| {
                    s[i + "about ".len()..]
                        .split(|c: char| !c.is_alphanumeric() && c != '_' && c != '-')
                        .next()
                        .unwrap_or("general")
                        .to_string()
                })
                .unwrap_or_else(|| "general".to_string());
            match by_topic.iter_mut().find(|(t, _)| *t == topic) {
                Some((_, tips)) => tips.push(s.clone()),
                None => by_topic.push((topic, vec![s.clone()])),
            }
        }
        if by_topic.is_empty() {
            by_topic.push((
                "general".to_string(),
                vec!["Prefer complete, accurate answers".to_string()],
            ));
        }
        by_topic.truncate(5);
        let mut out = String::from("<rubrics>\n");
        for (i, (topic, tips)) in by_topic.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&format!(
                "Theme: Responses about {topic} must satisfy the validated criteria\n"
            ));
            for (j, tip) in tips.iter().take(5).enumerate() {
                out.push_str(&format!("-Tip {}: {}\n", j + 1, tip));
            }
        }
        out.push_str("</rubrics>");
        out
    }
}

impl Default for SyntheticChatBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl ChatBackend for SyntheticChatBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        request.validate()?;
        let prompt = request.last_user_content();
        let content = if prompt.contains("<preference>A/B/tie</preference>") {
            Self::judge_response(prompt)
        } else if prompt.starts_with("##Task Description") {
            Self::structure_response(prompt)
        } else if prompt.contains("<rubrics>") {
            Self::rubric_response(prompt)
        } else {
            return Err(ClientError::InvalidInput(
                "synthetic backend does not recognize this prompt".into(),
            ));
        };
        Ok(ChatResponse {
            content,
            usage: Usage::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn sequence_script_replays_then_exhausts() {
        let mock = ScriptedChatBackend::sequence(["one", "two"]);
        let req = ChatRequest::user_prompt("p", 0.0);
        assert_eq!(mock.chat(&req).unwrap().content, "one");
        assert_eq!(mock.chat(&req).unwrap().content, "two");
        assert!(matches!(
            mock.chat(&req),
            Err(ClientError::ScriptExhausted)
        ));
        assert_eq!(mock.recorded_prompts().len(), 3);
    }

    #[test]
    fn rule_script_matches_keywords() {
        let mock = ScriptedChatBackend::rules(
            [("alpha", "A!"), ("beta", "B!")],
            Some("default".to_string()),
        );
        assert_eq!(
            mock.chat(&ChatRequest::user_prompt("has alpha inside", 0.0))
                .unwrap()
                .content,
            "A!"
        );
        assert_eq!(
            mock.chat(&ChatRequest::user_prompt("nothing", 0.0))
                .unwrap()
                .content,
            "default"
        );
    }

    #[test]
    fn hash_embedder_is_deterministic_and_unit_norm() {
        let e = HashProjectionEmbedder::new(7, 32);
        let texts = vec!["Be factual and precise".to_string(); 2];
        let out = e.embed(&texts).unwrap();
        assert_eq!(out[0], out[1]);
        let norm: f64 = out[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_vocabularies_are_nearly_orthogonal() {
        let e = HashProjectionEmbedder::new(7, 64);
        let out = e
            .embed(&[
                "quantum entanglement decoherence physics".to_string(),
                "sourdough hydration crumb bake".to_string(),
            ])
            .unwrap();
        assert!(cosine(&out[0], &out[1]).abs() < 0.5);
    }

    #[test]
    fn empty_input_rejected() {
        let e = HashProjectionEmbedder::new(1, 8);
        assert!(e.embed(&[]).is_err());
        assert!(e.embed(&["".to_string()]).is_err());
    }

    #[test]
    fn keyword_embedder_maps_to_axes() {
        let e = KeywordAxisEmbedder::new(
            vec!["castles".into(), "orbits".into()],
            4,
            0,
        )
        .unwrap();
        let out = e
            .embed(&[
                "Be accurate about castles".to_string(),
                "Cover orbits precisely".to_string(),
                "Something about castles again".to_string(),
            ])
            .unwrap();
        assert_eq!(out[0], vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(out[1], vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(out[0], out[2]);
    }

    #[test]
    fn synthetic_judge_prefers_longer_response() {
        let prompt = "## Rubrics\nr\n\n## Query\nq\n\n## Response A\nshort\n\n## Response B\nmuch longer response text\n\n## Output Requirement\n<preference>A/B/tie</preference>";
        let backend = SyntheticChatBackend::new();
        let resp = backend
            .chat(&ChatRequest::user_prompt(prompt, 0.0))
            .unwrap();
        assert_eq!(resp.content, "<preference>B</preference>");
    }
}
