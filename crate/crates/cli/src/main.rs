use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rubric_cli::commands::{
    cmd_diagnose, cmd_export_trace, cmd_extract, cmd_judge, cmd_select, DiagnoseOptions,
    ExportTraceOptions, ExtractOptions, JudgeOptions, SelectOptions, SelectionOverrides,
};
use rubric_cli::config::RunConfig;
use rubric_cli::CliError;

/// Extract, select, judge, and diagnose evaluation rubrics from pairwise
/// preference data.
#[derive(Parser)]
#[command(name = "rubric", version, about)]
struct Cli {
    /// Path to a TOML run configuration; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct SelectionFlags {
    /// Distortion parameter for the coding-rate objective.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Minimum marginal gain before selection counts as saturated.
    #[arg(long)]
    tau_min: Option<f64>,
    /// Consecutive saturated steps before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Core-set size cap (0 = unbounded).
    #[arg(long)]
    max_size: Option<usize>,
}

impl SelectionFlags {
    fn overrides(&self) -> SelectionOverrides {
        SelectionOverrides {
            epsilon: self.epsilon,
            tau_min: self.tau_min,
            patience: self.patience,
            max_size: self.max_size,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full extraction pipeline over a preference dataset
    Extract {
        /// JSONL dataset of preference pairs.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Directory for pool.jsonl, core.json, rubrics.json, run_report.json.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Checkpoint file (default: <output>/checkpoint.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from the checkpoint instead of starting fresh.
        #[arg(long)]
        resume: bool,
        /// Checkpoint and exit after this many iterations (resume later).
        #[arg(long)]
        pause_after: Option<usize>,
        /// Pairs per batch iteration.
        #[arg(long)]
        batch_size: Option<usize>,
        /// Maximum refinement epochs per pair.
        #[arg(long)]
        e_max: Option<u32>,
        /// Sampling / presentation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Maximum number of themes in the structured output.
        #[arg(long)]
        theme_count: Option<usize>,
        /// Hard cap on batch iterations.
        #[arg(long)]
        max_batch_iterations: Option<usize>,
        #[command(flatten)]
        selection: SelectionFlags,
    },
    /// Re-select a core set from a saved rubric pool
    Select {
        /// pool.jsonl produced by extract.
        #[arg(long)]
        pool: PathBuf,
        /// Output core.json path (default: core.json beside the pool).
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        selection: SelectionFlags,
    },
    /// Score rubrics on coverage, precision, and contribution
    Diagnose {
        /// rubrics.json document or JSON array of rubric strings.
        #[arg(long)]
        rubrics: PathBuf,
        /// JSONL test set of labeled preference pairs.
        #[arg(long)]
        testset: PathBuf,
        /// Directory for report.json and report.txt.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Votes per pair for the accuracy metrics.
        #[arg(long)]
        n_votes: Option<usize>,
        /// Seed for per-vote presentation flips.
        #[arg(long)]
        vote_seed: Option<u64>,
    },
    /// Judge one response pair under saved rubrics
    Judge {
        /// rubrics.json document or JSON array of rubric strings.
        #[arg(long)]
        rubrics: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long)]
        response_a: String,
        #[arg(long)]
        response_b: String,
    },
    /// Export the selection trace and batch gains as CSV
    ExportTrace {
        /// core.json produced by extract or select.
        #[arg(long)]
        core: PathBuf,
        /// Directory for trace.csv and batch_gains.csv (default: beside core).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = RunConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Extract {
            dataset,
            output,
            checkpoint,
            resume,
            pause_after,
            batch_size,
            e_max,
            seed,
            theme_count,
            max_batch_iterations,
            selection,
        } => cmd_extract(
            config,
            &ExtractOptions {
                dataset,
                output_dir: output,
                checkpoint,
                resume,
                pause_after,
                batch_size,
                e_max,
                seed,
                theme_count,
                max_batch_iterations,
                selection: selection.overrides(),
            },
        ),
        Command::Select { pool, output, selection } => cmd_select(
            config,
            &SelectOptions {
                pool,
                output,
                selection: selection.overrides(),
            },
        ),
        Command::Diagnose {
            rubrics,
            testset,
            output,
            n_votes,
            vote_seed,
        } => cmd_diagnose(
            config,
            &DiagnoseOptions {
                rubrics,
                testset,
                output_dir: output,
                n_votes,
                vote_seed,
            },
        ),
        Command::Judge {
            rubrics,
            query,
            response_a,
            response_b,
        } => cmd_judge(
            config,
            &JudgeOptions {
                rubrics,
                query,
                response_a,
                response_b,
            },
        ),
        Command::ExportTrace { core, output } => cmd_export_trace(&ExportTraceOptions {
            core,
            output_dir: output,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
