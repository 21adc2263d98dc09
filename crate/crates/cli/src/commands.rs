//! Subcommand implementations.

use std::path::{Path, PathBuf};

use rubric_core::artifacts::{
    self, atomic_write, CoreDocument, RubricsDocument, RunReport,
};
use rubric_core::client::EmbeddingCache;
use rubric_core::dataset::load_dataset;
use rubric_core::diagnostics::{diagnose_all, DiagnosticSet, TestSet, VotingConfig};
use rubric_core::pipeline::Extractor;
use rubric_core::refinement::{judge, JudgeRubrics};
use rubric_core::selection::{greedy_select, Candidate, SelectionError};
use rubric_core::theme_tips::ThemeTipsRubric;

use crate::config::RunConfig;
use crate::CliError;

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Flag-level overrides shared by `extract` and `select`.
#[derive(Debug, Default, Clone)]
pub struct SelectionOverrides {
    pub epsilon: Option<f64>,
    pub tau_min: Option<f64>,
    pub patience: Option<usize>,
    pub max_size: Option<usize>,
}

impl SelectionOverrides {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(v) = self.epsilon {
            config.selection.epsilon = v;
        }
        if let Some(v) = self.tau_min {
            config.selection.tau_min = v;
        }
        if let Some(v) = self.patience {
            config.selection.patience = v;
        }
        if let Some(v) = self.max_size {
            config.selection.max_size = v;
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct ExtractOptions {
    pub dataset: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub resume: bool,
    /// Stop after this many iterations in this invocation, leaving the
    /// checkpoint behind for a later `--resume`.
    pub pause_after: Option<usize>,
    pub batch_size: Option<usize>,
    pub e_max: Option<u32>,
    pub seed: Option<u64>,
    pub theme_count: Option<usize>,
    pub max_batch_iterations: Option<usize>,
    pub selection: SelectionOverrides,
}

/// Run the full pipeline and write pool.jsonl, core.json, rubrics.json, and
/// run_report.json into the output directory.
pub fn cmd_extract(mut config: RunConfig, options: &ExtractOptions) -> Result<(), CliError> {
    if let Some(v) = options.batch_size {
        config.pipeline.batch_size = v;
    }
    if let Some(v) = options.e_max {
        config.pipeline.e_max = v;
    }
    if let Some(v) = options.seed {
        config.pipeline.seed = v;
    }
    if let Some(v) = options.theme_count {
        config.pipeline.theme_count = v;
    }
    if let Some(v) = options.max_batch_iterations {
        config.pipeline.max_batch_iterations = v;
    }
    options.selection.apply(&mut config);

    let dataset_path = options
        .dataset
        .clone()
        .or_else(|| config.paths.dataset.clone())
        .ok_or_else(|| CliError::Validation("no dataset path given (flag or paths.dataset)".into()))?;
    if !dataset_path.exists() {
        return Err(CliError::Validation(format!(
            "dataset {} does not exist",
            dataset_path.display()
        )));
    }
    let output_dir = options
        .output_dir
        .clone()
        .or_else(|| config.paths.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&output_dir).map_err(runtime)?;
    let checkpoint_path = options
        .checkpoint
        .clone()
        .or_else(|| config.paths.checkpoint.clone())
        .unwrap_or_else(|| output_dir.join("checkpoint.json"));
    let cache_path = checkpoint_path
        .parent()
        .unwrap_or(Path::new("."))
        .join("embedding_cache.json");

    let dataset = load_dataset(&dataset_path).map_err(validation)?;
    let pipeline_config = config.pipeline_config()?;
    let chat = config.chat_backend()?;
    let embed = config.embed_backend()?;

    let mut extractor = if options.resume {
        if !checkpoint_path.exists() {
            return Err(CliError::Validation(format!(
                "cannot resume: checkpoint {} does not exist",
                checkpoint_path.display()
            )));
        }
        log::info!("resuming from {}", checkpoint_path.display());
        Extractor::resume(&checkpoint_path, &dataset).map_err(validation)?
    } else {
        Extractor::new(&dataset, pipeline_config).map_err(validation)?
    };
    let mut cache = EmbeddingCache::open(&cache_path).map_err(runtime)?;

    let mut ran_this_invocation = 0usize;
    loop {
        let more = extractor
            .step(chat.as_ref(), embed.as_ref(), &mut cache)
            .map_err(runtime)?;
        extractor.checkpoint(&checkpoint_path).map_err(runtime)?;
        cache.save().map_err(runtime)?;
        ran_this_invocation += 1;
        let state = extractor.state();
        let last_gain = state.batch_gain_history.last().copied().unwrap_or(0.0);
        log::info!(
            "iteration {}: pool {} rubrics, core {}, batch gain {last_gain:.6}",
            state.next_iteration - 1,
            state.pool.len(),
            state.core.as_ref().map(|c| c.len()).unwrap_or(0),
        );
        if !more {
            break;
        }
        if options.pause_after == Some(ran_this_invocation) {
            println!(
                "paused after {ran_this_invocation} iteration(s); resume with --resume --checkpoint {}",
                checkpoint_path.display()
            );
            return Ok(());
        }
    }

    let result = extractor.finish(chat.as_ref()).map_err(runtime)?;
    let state = extractor.state();

    artifacts::save_pool(&output_dir.join("pool.jsonl"), &state.pool).map_err(runtime)?;
    artifacts::save_core(
        &output_dir.join("core.json"),
        &CoreDocument::new(&result.core, result.batch_gain_history.clone()),
    )
    .map_err(runtime)?;
    artifacts::save_rubrics(
        &output_dir.join("rubrics.json"),
        &RubricsDocument::new(result.structured.clone()),
    )
    .map_err(runtime)?;
    let report = RunReport {
        schema_version: artifacts::ARTIFACT_SCHEMA_VERSION,
        stop_reason: result.stop_reason,
        iterations: result.batch_gain_history.len(),
        pairs_processed: result.pairs_processed,
        validated_pairs: state.validated_pairs,
        failed_pairs: state.failed_pairs,
        pool_size: result.pool_size,
        core_size: result.core.len(),
        batch_gain_history: result.batch_gain_history.clone(),
        pair_errors: state.pair_errors.clone(),
    };
    artifacts::save_report(&output_dir.join("run_report.json"), &report).map_err(runtime)?;

    println!(
        "extracted {} themes from {} pairs ({} validated) in {} iterations; artifacts in {}",
        result.structured.themes.len(),
        result.pairs_processed,
        state.validated_pairs,
        report.iterations,
        output_dir.display()
    );
    Ok(())
}

#[derive(Debug, Default, Clone)]
pub struct SelectOptions {
    pub pool: PathBuf,
    pub output: Option<PathBuf>,
    pub selection: SelectionOverrides,
}

/// Re-select a core set from a saved pool.
pub fn cmd_select(mut config: RunConfig, options: &SelectOptions) -> Result<(), CliError> {
    options.selection.apply(&mut config);
    let selection_config = config.selection_config()?;

    let pool = artifacts::load_pool(&options.pool).map_err(validation)?;
    if pool.is_empty() {
        return Err(CliError::Validation(format!(
            "pool {} is empty",
            options.pool.display()
        )));
    }
    let mut candidates = Vec::with_capacity(pool.len());
    for rubric in &pool.rubrics {
        let embedding = rubric.embedding.clone().ok_or_else(|| {
            CliError::Validation(format!("pool rubric {} has no embedding", rubric.id))
        })?;
        candidates.push(Candidate::new(rubric.id.clone(), embedding));
    }
    let core = greedy_select(&candidates, &selection_config).map_err(|e| match e {
        SelectionError::CodingRate(inner) => runtime(inner),
        other => validation(other),
    })?;

    let output = options
        .output
        .clone()
        .unwrap_or_else(|| options.pool.with_file_name("core.json"));
    artifacts::save_core(&output, &CoreDocument::new(&core, Vec::new())).map_err(runtime)?;
    println!(
        "selected {} of {} rubrics (stop: {:?}); wrote {}",
        core.len(),
        pool.len(),
        core.trace.stop_reason,
        output.display()
    );
    Ok(())
}

/// Load rubrics for judging/diagnosis: either a rubrics.json document or a
/// plain JSON array of strings.
fn load_judge_rubrics(path: &Path) -> Result<LoadedRubrics, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(doc) = serde_json::from_str::<RubricsDocument>(&text) {
        return Ok(LoadedRubrics::Structured(doc.themes));
    }
    if let Ok(texts) = serde_json::from_str::<Vec<String>>(&text) {
        if texts.is_empty() {
            return Err(CliError::Validation("rubric list is empty".into()));
        }
        return Ok(LoadedRubrics::Flat(texts));
    }
    Err(CliError::Validation(format!(
        "{} is neither a rubrics document nor a JSON array of strings",
        path.display()
    )))
}

enum LoadedRubrics {
    Structured(ThemeTipsRubric),
    Flat(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct JudgeOptions {
    pub rubrics: PathBuf,
    pub query: String,
    pub response_a: String,
    pub response_b: String,
}

/// Judge one response pair; prints the verdict (A, B, or Tie) on stdout.
pub fn cmd_judge(config: RunConfig, options: &JudgeOptions) -> Result<(), CliError> {
    let rubrics = load_judge_rubrics(&options.rubrics)?;
    let backend = config.judge_backend()?;
    let judge_rubrics = match &rubrics {
        LoadedRubrics::Structured(t) => JudgeRubrics::Structured(t),
        LoadedRubrics::Flat(texts) => JudgeRubrics::Flat(texts),
    };
    let judgment = judge(
        &options.query,
        &options.response_a,
        &options.response_b,
        &judge_rubrics,
        backend.as_ref(),
    )
    .map_err(runtime)?;
    println!("{}", judgment.verdict);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DiagnoseOptions {
    pub rubrics: PathBuf,
    pub testset: PathBuf,
    pub output_dir: Option<PathBuf>,
    pub n_votes: Option<usize>,
    pub vote_seed: Option<u64>,
}

/// Score every rubric on coverage, precision, and contribution; writes
/// report.json and report.txt and prints the table.
pub fn cmd_diagnose(config: RunConfig, options: &DiagnoseOptions) -> Result<(), CliError> {
    let rubrics = load_judge_rubrics(&options.rubrics)?;
    let set = match &rubrics {
        LoadedRubrics::Structured(t) => DiagnosticSet::from_theme_tips(t),
        LoadedRubrics::Flat(texts) => DiagnosticSet::from_texts(texts),
    }
    .map_err(validation)?;
    let pairs = load_dataset(&options.testset).map_err(validation)?;
    let test = TestSet::new(pairs).map_err(validation)?;
    let voting = VotingConfig {
        n_votes: options.n_votes.unwrap_or(1),
        seed: options.vote_seed.unwrap_or(0),
    };
    let backend = config.judge_backend()?;
    let (_, report) = diagnose_all(&set, &test, &voting, backend.as_ref()).map_err(validation)?;

    let output_dir = options
        .output_dir
        .clone()
        .or_else(|| config.paths.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&output_dir).map_err(runtime)?;
    let json = serde_json::to_string_pretty(&report).map_err(runtime)?;
    atomic_write(&output_dir.join("report.json"), json.as_bytes()).map_err(runtime)?;
    let table = report.render_table();
    atomic_write(&output_dir.join("report.txt"), table.as_bytes()).map_err(runtime)?;
    print!("{table}");
    println!(
        "full-set accuracy {:.2}% over {} pairs; reports in {}",
        report.full_set_accuracy * 100.0,
        report.test_size,
        output_dir.display()
    );
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ExportTraceOptions {
    pub core: PathBuf,
    pub output_dir: Option<PathBuf>,
}

/// Export the selection trace and the batch-gain history as CSV files.
pub fn cmd_export_trace(options: &ExportTraceOptions) -> Result<(), CliError> {
    let doc = artifacts::load_core(&options.core).map_err(validation)?;
    let output_dir = options
        .output_dir
        .clone()
        .or_else(|| options.core.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&output_dir).map_err(runtime)?;
    let trace_path = output_dir.join("trace.csv");
    let gains_path = output_dir.join("batch_gains.csv");
    atomic_write(&trace_path, artifacts::trace_csv(&doc.trace).as_bytes()).map_err(runtime)?;
    atomic_write(
        &gains_path,
        artifacts::batch_gains_csv(&doc.batch_gain_history).as_bytes(),
    )
    .map_err(runtime)?;
    println!("wrote {} and {}", trace_path.display(), gains_path.display());
    Ok(())
}
