//! Batch-iterative rubric extraction.
//!
//! Each iteration samples a batch of pairs without replacement, refines them
//! (collecting rubrics only from validated outcomes), embeds the new rubric
//! texts, reselects the core from core ∪ new, and records the batch-level
//! coding-rate gain. The run stops once the gain stays below `tau_min` for
//! `patience` consecutive iterations, the iteration cap is hit, or the
//! dataset is exhausted; the surviving core is then structured into a
//! theme/tips hierarchy.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ChatBackend, ChatRequest, ClientError, EmbedBackend, EmbeddingCache};
use crate::refinement::{
    refine_pair, PreferencePair, RefineOptions, RefinementStatus, Rubric,
    GENERATION_TEMPERATURE,
};
use crate::refinement::parse::parse_rubrics_block;
use crate::refinement::prompts::{render_structure, StructureExample};
use crate::selection::{
    early_stop_check, pool_coding_rate, update_core, Candidate, CoreSet, SelectionConfig,
    SelectionError,
};
use crate::theme_tips::{parse_theme_tips, ThemeTipsRubric};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint references pair {0} missing from the dataset")]
    MissingPair(String),
    #[error("no validated rubrics to structure")]
    NoValidatedRubrics,
    #[error("extraction has not reached a stop condition yet")]
    NotFinished,
    #[error("structuring failed: {0}")]
    Structuring(String),
    #[error("checkpoint schema version {found} is unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("checkpoint unreadable: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Knobs of the whole extraction run. Defaults are the shipped
/// configuration: B=10, E_max=10, τ_min=0.002, patience=2, k=5.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PipelineConfig {
    /// Pairs sampled per batch iteration (B).
    pub batch_size: usize,
    /// Maximum refinement epochs per pair.
    pub e_max: u32,
    /// Cap on rubrics per generation call.
    pub max_rubrics_per_pair: usize,
    pub selection: SelectionConfig,
    /// Maximum number of themes in the structured output (k).
    pub theme_count: usize,
    /// Seed for batch sampling and presentation flips.
    pub seed: u64,
    /// Hard cap on batch iterations (T).
    pub max_batch_iterations: usize,
    /// Concurrent pair refinements within one batch.
    pub parallelism: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            e_max: 10,
            max_rubrics_per_pair: 5,
            selection: SelectionConfig::default(),
            theme_count: 5,
            seed: 0,
            max_batch_iterations: 100,
            parallelism: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.batch_size < 1 {
            return Err(PipelineError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.e_max < 1 {
            return Err(PipelineError::InvalidConfig("e_max must be >= 1".into()));
        }
        if self.max_rubrics_per_pair < 1 {
            return Err(PipelineError::InvalidConfig(
                "max_rubrics_per_pair must be >= 1".into(),
            ));
        }
        if self.theme_count < 1 {
            return Err(PipelineError::InvalidConfig("theme_count must be >= 1".into()));
        }
        if self.max_batch_iterations < 1 {
            return Err(PipelineError::InvalidConfig(
                "max_batch_iterations must be >= 1".into(),
            ));
        }
        if self.parallelism < 1 {
            return Err(PipelineError::InvalidConfig("parallelism must be >= 1".into()));
        }
        self.selection
            .validate()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStopReason {
    EarlyStop,
    MaxIterations,
    DatasetExhausted,
}

/// Accumulated validated rubrics, in insertion order.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct RubricPool {
    pub rubrics: Vec<Rubric>,
}

impl RubricPool {
    pub fn len(&self) -> usize {
        self.rubrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rubrics.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.rubrics.iter().any(|r| r.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&Rubric> {
        self.rubrics.iter().find(|r| r.id == id)
    }

    fn candidate(&self, id: &str) -> Option<Candidate> {
        self.get(id).and_then(|r| {
            r.embedding
                .as_ref()
                .map(|e| Candidate::new(r.id.clone(), e.clone()))
        })
    }
}

/// A pair whose refinement aborted on a backend or parse error.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PairError {
    pub pair_id: String,
    pub message: String,
}

/// Everything needed to continue a run: persisted after every iteration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExtractionState {
    pub schema_version: u32,
    pub config: PipelineConfig,
    /// ChaCha word position, decimal-encoded (u128 does not fit JSON).
    pub rng_word_pos: String,
    /// 1-based index of the next batch iteration.
    pub next_iteration: usize,
    pub remaining_ids: Vec<String>,
    pub processed_ids: Vec<String>,
    pub pool: RubricPool,
    pub core: Option<CoreSet>,
    /// Coding rate of the current core, for batch-gain bookkeeping.
    pub core_rate: f64,
    pub batch_gain_history: Vec<f64>,
    pub pairs_processed: usize,
    pub validated_pairs: usize,
    pub failed_pairs: usize,
    pub pair_errors: Vec<PairError>,
    pub finished: Option<PipelineStopReason>,
}

impl ExtractionState {
    pub fn from_json_str(text: &str) -> Result<Self, PipelineError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| PipelineError::Checkpoint(format!("invalid JSON: {e}")))?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| PipelineError::Checkpoint("missing schema_version".into()))?
            as u32;
        if found != CHECKPOINT_SCHEMA_VERSION {
            return Err(PipelineError::CheckpointVersion {
                found,
                expected: CHECKPOINT_SCHEMA_VERSION,
            });
        }
        serde_json::from_value(value)
            .map_err(|e| PipelineError::Checkpoint(format!("malformed state: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Persist with 17-significant-digit floats so a reload is bit-exact.
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let body = crate::json17::to_string_17(self)
            .map_err(|e| PipelineError::Checkpoint(e.to_string()))?;
        crate::artifacts::atomic_write(path, body.as_bytes())?;
        Ok(())
    }

    fn word_pos(&self) -> Result<u128, PipelineError> {
        self.rng_word_pos
            .parse::<u128>()
            .map_err(|e| PipelineError::Checkpoint(format!("bad rng_word_pos: {e}")))
    }
}

/// Final artifact bundle of a finished run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExtractionResult {
    pub core: CoreSet,
    pub structured: ThemeTipsRubric,
    pub pool_size: usize,
    pub pairs_processed: usize,
    pub batch_gain_history: Vec<f64>,
    pub stop_reason: PipelineStopReason,
}

/// Step-wise driver around [`ExtractionState`], so callers can checkpoint
/// between iterations.
pub struct Extractor {
    state: ExtractionState,
    pairs_by_id: BTreeMap<String, PreferencePair>,
}

impl Extractor {
    pub fn new(dataset: &[PreferencePair], config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(PipelineError::EmptyDataset);
        }
        let state = ExtractionState {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            config,
            rng_word_pos: "0".to_string(),
            next_iteration: 1,
            remaining_ids: dataset.iter().map(|p| p.id.clone()).collect(),
            processed_ids: Vec::new(),
            pool: RubricPool::default(),
            core: None,
            core_rate: 0.0,
            batch_gain_history: Vec::new(),
            pairs_processed: 0,
            validated_pairs: 0,
            failed_pairs: 0,
            pair_errors: Vec::new(),
            finished: None,
        };
        Ok(Self {
            state,
            pairs_by_id: index_pairs(dataset),
        })
    }

    /// Continue from a persisted state. Every unprocessed id must still be
    /// present in the dataset.
    pub fn from_state(
        state: ExtractionState,
        dataset: &[PreferencePair],
    ) -> Result<Self, PipelineError> {
        state.config.validate()?;
        let pairs_by_id = index_pairs(dataset);
        for id in &state.remaining_ids {
            if !pairs_by_id.contains_key(id) {
                return Err(PipelineError::MissingPair(id.clone()));
            }
        }
        Ok(Self { state, pairs_by_id })
    }

    pub fn resume(path: &Path, dataset: &[PreferencePair]) -> Result<Self, PipelineError> {
        Self::from_state(ExtractionState::load(path)?, dataset)
    }

    pub fn state(&self) -> &ExtractionState {
        &self.state
    }

    pub fn stop_reason(&self) -> Option<PipelineStopReason> {
        self.state.finished
    }

    pub fn checkpoint(&self, path: &Path) -> Result<(), PipelineError> {
        self.state.save(path)
    }

    /// Run one batch iteration. Returns `false` once a stop condition has
    /// been reached (including calls made after that point).
    pub fn step(
        &mut self,
        chat: &dyn ChatBackend,
        embed: &dyn EmbedBackend,
        cache: &mut EmbeddingCache,
    ) -> Result<bool, PipelineError> {
        if self.state.finished.is_some() {
            return Ok(false);
        }
        let t = self.state.next_iteration;
        let config = self.state.config.clone();

        // Sample without replacement using the persisted RNG position.
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_word_pos(self.state.word_pos()?);
        let take = config.batch_size.min(self.state.remaining_ids.len());
        let mut batch_ids = Vec::with_capacity(take);
        for _ in 0..take {
            let idx = rng.gen_range(0..self.state.remaining_ids.len());
            batch_ids.push(self.state.remaining_ids.swap_remove(idx));
        }
        self.state.rng_word_pos = rng.get_word_pos().to_string();

        let batch: Vec<&PreferencePair> = batch_ids
            .iter()
            .map(|id| {
                self.pairs_by_id
                    .get(id)
                    .expect("sampled ids come from the dataset")
            })
            .collect();
        let options = RefineOptions {
            e_max: config.e_max,
            max_rubrics: config.max_rubrics_per_pair,
            seed: config.seed,
        };
        let outcomes = refine_batch(&batch, &options, chat, config.parallelism);

        let mut new_rubrics: Vec<Rubric> = Vec::new();
        for (pair_id, outcome) in batch_ids.iter().zip(outcomes) {
            self.state.pairs_processed += 1;
            self.state.processed_ids.push(pair_id.clone());
            match outcome {
                Ok(outcome) => match outcome.status {
                    RefinementStatus::Validated => {
                        self.state.validated_pairs += 1;
                        for mut rubric in outcome.rubrics {
                            rubric.batch_iteration = t as u32;
                            let duplicate = self.state.pool.contains(&rubric.id)
                                || new_rubrics.iter().any(|r| r.id == rubric.id);
                            if !duplicate {
                                new_rubrics.push(rubric);
                            }
                        }
                    }
                    RefinementStatus::Failed => self.state.failed_pairs += 1,
                },
                Err(e) => {
                    log::warn!("pair {pair_id} aborted: {e}");
                    self.state.pair_errors.push(PairError {
                        pair_id: pair_id.clone(),
                        message: e.to_string(),
                    });
                }
            }
        }

        let gain = if new_rubrics.is_empty() {
            0.0
        } else {
            let texts: Vec<String> = new_rubrics.iter().map(|r| r.text.clone()).collect();
            let embeddings = cache.embed(embed, &texts)?;
            for (rubric, vec) in new_rubrics.iter_mut().zip(embeddings) {
                rubric.embedding = Some(vec);
            }
            let new_candidates: Vec<Candidate> = new_rubrics
                .iter()
                .map(|r| Candidate::new(r.id.clone(), r.embedding.clone().expect("just set")))
                .collect();
            for rubric in new_rubrics {
                self.state.pool.rubrics.push(rubric);
            }
            let core_candidates: Vec<Candidate> = match &self.state.core {
                Some(core) => core
                    .rubric_ids
                    .iter()
                    .filter_map(|id| self.state.pool.candidate(id))
                    .collect(),
                None => Vec::new(),
            };
            let core = update_core(&core_candidates, &new_candidates, &config.selection)?;
            let members: Vec<Candidate> = core
                .rubric_ids
                .iter()
                .filter_map(|id| self.state.pool.candidate(id))
                .collect();
            let new_rate = pool_coding_rate(&members, &config.selection.params)?;
            let gain = new_rate - self.state.core_rate;
            self.state.core = Some(core);
            self.state.core_rate = new_rate;
            gain
        };
        self.state.batch_gain_history.push(gain);

        self.state.finished = if early_stop_check(
            &self.state.batch_gain_history,
            config.selection.tau_min,
            config.selection.patience,
        ) {
            Some(PipelineStopReason::EarlyStop)
        } else if t >= config.max_batch_iterations {
            Some(PipelineStopReason::MaxIterations)
        } else if self.state.remaining_ids.is_empty() {
            Some(PipelineStopReason::DatasetExhausted)
        } else {
            None
        };
        self.state.next_iteration = t + 1;
        Ok(self.state.finished.is_none())
    }

    /// Structure the final core and assemble the run result.
    pub fn finish(&self, chat: &dyn ChatBackend) -> Result<ExtractionResult, PipelineError> {
        let stop_reason = self.state.finished.ok_or(PipelineError::NotFinished)?;
        let core = self
            .state
            .core
            .as_ref()
            .filter(|c| !c.is_empty())
            .ok_or(PipelineError::NoValidatedRubrics)?;
        let structured = structure_core(core, &self.state.pool, self.state.config.theme_count, chat)?;
        Ok(ExtractionResult {
            core: core.clone(),
            structured,
            pool_size: self.state.pool.len(),
            pairs_processed: self.state.pairs_processed,
            batch_gain_history: self.state.batch_gain_history.clone(),
            stop_reason,
        })
    }
}

fn index_pairs(dataset: &[PreferencePair]) -> BTreeMap<String, PreferencePair> {
    dataset
        .iter()
        .map(|p| (p.id.clone(), p.clone()))
        .collect()
}

/// Refine a batch of pairs, optionally in parallel. Results are returned in
/// batch order regardless of completion order; each pair's loop stays
/// strictly sequential.
fn refine_batch(
    batch: &[&PreferencePair],
    options: &RefineOptions,
    chat: &dyn ChatBackend,
    parallelism: usize,
) -> Vec<Result<crate::refinement::RefinementOutcome, crate::refinement::RefineError>> {
    if parallelism <= 1 || batch.len() <= 1 {
        return batch.iter().map(|p| refine_pair(p, options, chat)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<_> = batch.iter().map(|_| None).collect();
    let slot_refs: Vec<std::sync::Mutex<&mut Option<_>>> =
        slots.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..parallelism.min(batch.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= batch.len() {
                    break;
                }
                let result = refine_pair(batch[i], options, chat);
                **slot_refs[i].lock().expect("slot poisoned") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every slot filled"))
        .collect()
}

/// Turn the core set into a theme/tips hierarchy via the structuring prompt.
///
/// Each core rubric is presented as an example carrying its source query.
/// Cardinality bounds are validated; one corrective re-ask is allowed before
/// the run fails with a structuring error.
pub fn structure_core(
    core: &CoreSet,
    pool: &RubricPool,
    theme_count: usize,
    chat: &dyn ChatBackend,
) -> Result<ThemeTipsRubric, PipelineError> {
    if core.is_empty() {
        return Err(PipelineError::NoValidatedRubrics);
    }
    let examples: Vec<StructureExample> = core
        .rubric_ids
        .iter()
        .filter_map(|id| pool.get(id))
        .map(|r| StructureExample {
            query: r.source_query.clone(),
            suggestion: r.text.clone(),
        })
        .collect();
    if examples.is_empty() {
        return Err(PipelineError::NoValidatedRubrics);
    }
    let prompt = render_structure(&examples, theme_count);
    let request = ChatRequest::user_prompt(&prompt, GENERATION_TEMPERATURE);
    let mut last_error = String::new();
    for _ in 0..2 {
        let response = chat.chat(&request).map_err(PipelineError::Client)?;
        match parse_rubrics_response(&response.content, theme_count) {
            Ok(rubric) => return Ok(rubric),
            Err(e) => last_error = e,
        }
    }
    Err(PipelineError::Structuring(last_error))
}

fn parse_rubrics_response(content: &str, theme_count: usize) -> Result<ThemeTipsRubric, String> {
    let block = parse_rubrics_block(content).map(|_| ()).err();
    // parse_rubrics_block flattens lines; here the raw block text is needed.
    let raw = crate::refinement::parse::extract_tag_block(content, "rubrics")
        .ok_or_else(|| match block {
            Some(e) => e.to_string(),
            None => "missing rubrics block".to_string(),
        })?;
    let rubric = parse_theme_tips(raw).map_err(|e| e.to_string())?;
    rubric.validate(theme_count).map_err(|e| e.to_string())?;
    Ok(rubric)
}

/// One-shot convenience: run every iteration with an in-memory cache, then
/// structure the result.
pub fn run_extraction(
    dataset: &[PreferencePair],
    config: PipelineConfig,
    chat: &dyn ChatBackend,
    embed: &dyn EmbedBackend,
) -> Result<ExtractionResult, PipelineError> {
    let mut extractor = Extractor::new(dataset, config)?;
    let mut cache = EmbeddingCache::in_memory();
    while extractor.step(chat, embed, &mut cache)? {}
    extractor.finish(chat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{KeywordAxisEmbedder, ScriptedChatBackend, SyntheticChatBackend};
    use crate::refinement::PreferredSide;

    pub(crate) fn topic_pair(topic: &str, i: usize) -> PreferencePair {
        PreferencePair {
            id: format!("{topic}-{i:02}"),
            query: format!("Tell me about topic:{topic}, case {i}."),
            response_a: format!(
                "A thorough, accurate and well-organized answer about {topic}, with examples."
            ),
            response_b: "meh".into(),
            preferred: PreferredSide::A,
            critique: None,
        }
    }

    fn topics4() -> Vec<&'static str> {
        vec!["castles", "orbits", "sonnets", "glaciers"]
    }

    fn dataset4(per_topic: usize) -> Vec<PreferencePair> {
        let mut out = Vec::new();
        for i in 0..per_topic {
            for t in topics4() {
                out.push(topic_pair(t, i));
            }
        }
        out
    }

    fn axis_embedder() -> KeywordAxisEmbedder {
        KeywordAxisEmbedder::new(
            topics4().into_iter().map(String::from).collect(),
            8,
            99,
        )
        .unwrap()
    }

    fn small_config(batch_size: usize, seed: u64) -> PipelineConfig {
        PipelineConfig {
            batch_size,
            seed,
            max_batch_iterations: 20,
            ..Default::default()
        }
    }

    #[test]
    fn exact_batch_dataset_runs_one_iteration() {
        let dataset: Vec<PreferencePair> =
            (0..4).map(|i| topic_pair("castles", i)).collect();
        let config = PipelineConfig {
            batch_size: 4,
            max_batch_iterations: 5,
            ..Default::default()
        };
        let chat = SyntheticChatBackend::new();
        let embed = axis_embedder();
        let result = run_extraction(&dataset, config, &chat, &embed).unwrap();
        assert_eq!(result.stop_reason, PipelineStopReason::DatasetExhausted);
        assert_eq!(result.batch_gain_history.len(), 1);
        assert_eq!(result.pairs_processed, 4);
    }

    #[test]
    fn saturation_stops_early_and_covers_all_topics() {
        let dataset = dataset4(6);
        let config = small_config(2, 13);
        let chat = SyntheticChatBackend::new();
        let embed = axis_embedder();
        let mut extractor = Extractor::new(&dataset, config).unwrap();
        let mut cache = EmbeddingCache::in_memory();
        while extractor.step(&chat, &embed, &mut cache).unwrap() {}
        let result = extractor.finish(&chat).unwrap();
        assert_eq!(result.stop_reason, PipelineStopReason::EarlyStop);

        // The first four picks land on four distinct topic axes.
        let pool = &extractor.state().pool;
        let pick_topics: std::collections::BTreeSet<&str> = result
            .core
            .rubric_ids
            .iter()
            .take(4)
            .map(|id| {
                let text = &pool.get(id).expect("core ids live in the pool").text;
                topics4()
                    .into_iter()
                    .find(|t| text.contains(t))
                    .expect("every mock rubric names its topic")
            })
            .collect();
        assert_eq!(pick_topics.len(), 4, "picks {:?}", result.core.rubric_ids);

        // Gains never degrade the core and the trailing window is saturated.
        for g in &result.batch_gain_history {
            assert!(*g >= -1e-9, "batch gain {g} decreased the core rate");
        }
        let n = result.batch_gain_history.len();
        assert!(result.batch_gain_history[n - 1] < 0.002);
        assert!(result.batch_gain_history[n - 2] < 0.002);
    }

    #[test]
    fn zero_validated_iteration_records_zero_gain() {
        // A judge that always answers tie validates nothing.
        let chat = ScriptedChatBackend::rules(
            [
                ("<preference>A/B/tie</preference>", "<preference>tie</preference>"),
                ("## Output Format Requirements", "<rubrics>Some rubric</rubrics>"),
            ],
            None,
        );
        let embed = axis_embedder();
        let dataset: Vec<PreferencePair> = (0..2).map(|i| topic_pair("castles", i)).collect();
        let config = PipelineConfig {
            batch_size: 2,
            e_max: 2,
            ..Default::default()
        };
        let mut extractor = Extractor::new(&dataset, config).unwrap();
        let mut cache = EmbeddingCache::in_memory();
        let more = extractor.step(&chat, &embed, &mut cache).unwrap();
        assert!(!more);
        assert_eq!(extractor.state().batch_gain_history, vec![0.0]);
        assert_eq!(extractor.state().failed_pairs, 2);
        // Nothing validated, so structuring refuses.
        assert!(matches!(
            extractor.finish(&chat),
            Err(PipelineError::NoValidatedRubrics)
        ));
    }

    #[test]
    fn parallel_refinement_matches_sequential() {
        let dataset = dataset4(3);
        let chat = SyntheticChatBackend::new();
        let embed = axis_embedder();
        let mut states = Vec::new();
        for parallelism in [1usize, 3] {
            let config = PipelineConfig {
                parallelism,
                ..small_config(4, 9)
            };
            let mut extractor = Extractor::new(&dataset, config).unwrap();
            let mut cache = EmbeddingCache::in_memory();
            while extractor.step(&chat, &embed, &mut cache).unwrap() {}
            let mut state = extractor.state().clone();
            // The parallelism knob itself is part of the persisted config;
            // mask it out so the comparison sees only run results.
            state.config.parallelism = 1;
            states.push(state);
        }
        assert_eq!(states[0], states[1]);
    }

    #[test]
    fn no_pair_is_refined_twice() {
        let dataset = dataset4(3);
        let config = small_config(5, 3);
        let chat = SyntheticChatBackend::new();
        let embed = axis_embedder();
        let mut extractor = Extractor::new(&dataset, config).unwrap();
        let mut cache = EmbeddingCache::in_memory();
        while extractor.step(&chat, &embed, &mut cache).unwrap() {}
        let processed = &extractor.state().processed_ids;
        let unique: std::collections::BTreeSet<_> = processed.iter().collect();
        assert_eq!(unique.len(), processed.len());
    }

    #[test]
    fn quality_gate_pool_traces_to_validated_outcomes() {
        let dataset = dataset4(2);
        let config = small_config(3, 5);
        let chat = SyntheticChatBackend::new();
        let embed = axis_embedder();
        let mut extractor = Extractor::new(&dataset, config).unwrap();
        let mut cache = EmbeddingCache::in_memory();
        while extractor.step(&chat, &embed, &mut cache).unwrap() {}
        let state = extractor.state();
        assert!(!state.pool.is_empty());
        for rubric in &state.pool.rubrics {
            assert!(
                state.processed_ids.contains(&rubric.source_pair_id),
                "pool rubric from unprocessed pair"
            );
            assert!(rubric.embedding.is_some());
            assert!(rubric.batch_iteration >= 1);
        }
        // The synthetic judge validates every pair in this geometry.
        assert_eq!(state.failed_pairs, 0);
        assert_eq!(state.validated_pairs, state.pairs_processed);
    }

    #[test]
    fn core_rate_is_non_decreasing_across_iterations() {
        let dataset = dataset4(6);
        let config = small_config(2, 21);
        let chat = SyntheticChatBackend::new();
        let embed = axis_embedder();
        let mut extractor = Extractor::new(&dataset, config).unwrap();
        let mut cache = EmbeddingCache::in_memory();
        let mut rates = vec![0.0];
        loop {
            let more = extractor.step(&chat, &embed, &mut cache).unwrap();
            rates.push(extractor.state().core_rate);
            if !more {
                break;
            }
        }
        for w in rates.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "core rate degraded: {rates:?}");
        }
    }

    #[test]
    fn checkpoint_round_trips_and_resume_matches_uninterrupted() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("checkpoint.json");
        let dataset = dataset4(4);
        let config = small_config(3, 7);
        let chat = SyntheticChatBackend::new();
        let embed = axis_embedder();

        // Uninterrupted run.
        let mut straight = Extractor::new(&dataset, config.clone()).unwrap();
        let mut cache_a = EmbeddingCache::in_memory();
        while straight.step(&chat, &embed, &mut cache_a).unwrap() {}
        let straight_state = crate::json17::to_string_17(straight.state()).unwrap();

        // Interrupted after two iterations, then resumed from disk.
        let mut first = Extractor::new(&dataset, config).unwrap();
        let mut cache_b = EmbeddingCache::in_memory();
        assert!(first.step(&chat, &embed, &mut cache_b).unwrap());
        assert!(first.step(&chat, &embed, &mut cache_b).unwrap());
        first.checkpoint(&ckpt).unwrap();

        let loaded = ExtractionState::load(&ckpt).unwrap();
        assert_eq!(loaded, *first.state(), "checkpoint round-trip");

        let mut resumed = Extractor::from_state(loaded, &dataset).unwrap();
        let mut cache_c = EmbeddingCache::in_memory();
        while resumed.step(&chat, &embed, &mut cache_c).unwrap() {}
        let resumed_state = crate::json17::to_string_17(resumed.state()).unwrap();
        assert_eq!(straight_state, resumed_state, "resumed run diverged");

        let a = straight.finish(&chat).unwrap();
        let b = resumed.finish(&chat).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_and_version_mismatched_checkpoints_are_refused() {
        assert!(matches!(
            ExtractionState::from_json_str("{not json"),
            Err(PipelineError::Checkpoint(_))
        ));
        assert!(matches!(
            ExtractionState::from_json_str("{\"schema_version\": 999}"),
            Err(PipelineError::CheckpointVersion { found: 999, .. })
        ));
        assert!(matches!(
            ExtractionState::from_json_str("{\"no_version\": true}"),
            Err(PipelineError::Checkpoint(_))
        ));
    }

    fn fixture_core_and_pool() -> (CoreSet, RubricPool) {
        let mut pool = RubricPool::default();
        let mut r1 = Rubric::new("Be accurate about castles", "p1", "q about castles", 1, 1);
        r1.embedding = Some(vec![1.0, 0.0]);
        let mut r2 = Rubric::new("Cover orbits fully", "p2", "q about orbits", 1, 1);
        r2.embedding = Some(vec![0.0, 1.0]);
        pool.rubrics.push(r1.clone());
        pool.rubrics.push(r2.clone());
        let core = CoreSet {
            rubric_ids: vec![r1.id.clone(), r2.id.clone()],
            trace: crate::selection::SelectionTrace {
                picks: vec![],
                stop_reason: crate::selection::StopReason::PoolExhausted,
            },
            epsilon_used: 0.5,
        };
        (core, pool)
    }

    #[test]
    fn structure_core_parses_two_themes() {
        let (core, pool) = fixture_core_and_pool();
        let chat = ScriptedChatBackend::sequence([
            "<rubrics>\nTheme: Be factual\n-Tip 1: Check castle dates\n\nTheme: Be complete\n-Tip 1: Describe full orbits\n</rubrics>",
        ]);
        let structured = structure_core(&core, &pool, 5, &chat).unwrap();
        assert_eq!(structured.themes.len(), 2);
        let prompts = chat.recorded_prompts();
        assert!(prompts[0].contains("<suggestion>\nBe accurate about castles\n</suggestion>"));
        assert!(prompts[0].contains("<query>\nq about castles\n</query>"));
    }

    #[test]
    fn structure_core_reasks_once_on_bound_violation() {
        let (core, pool) = fixture_core_and_pool();
        let six_themes = (1..=6)
            .map(|i| format!("Theme: T{i}\n-Tip 1: tip"))
            .collect::<Vec<_>>()
            .join("\n\n");
        let bad = format!("<rubrics>\n{six_themes}\n</rubrics>");
        // First response violates the theme cap, second is well-formed.
        let chat = ScriptedChatBackend::sequence([
            bad.clone(),
            "<rubrics>\nTheme: Fixed\n-Tip 1: ok\n</rubrics>".to_string(),
        ]);
        let structured = structure_core(&core, &pool, 5, &chat).unwrap();
        assert_eq!(structured.themes.len(), 1);

        // Two violations in a row fail.
        let chat = ScriptedChatBackend::sequence([bad.clone(), bad]);
        assert!(matches!(
            structure_core(&core, &pool, 5, &chat),
            Err(PipelineError::Structuring(_))
        ));
    }
}
