//! Command-line driver for `asag-core`.
//!
//! Exit codes: 0 success, 2 usage or validation error (including unreadable
//! or malformed inputs), 3 embedding provider failure, 1 anything else
//! (e.g. an output file that cannot be written).

mod commands;
mod config;
mod model;

use std::io::Write;
use std::path::{Path, PathBuf};

use asag_core::dataset::{DatasetError, DatasetFormat};
use asag_core::embedding::ProviderSpec;
use asag_core::evaluation::render_table;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use commands::{
    cmd_embed, cmd_evaluate, cmd_grade, cmd_report, cmd_stats, load_dataset, render_embed, render_grade,
    render_stats, EmbedSummary, EvaluateOptions, Evaluation, GradeOutcome,
};
pub use config::{ConfigFile, RunArgs, RunConfig, SplitModeArg, CACHE_FILE, DEFAULT_REGRESSORS};
pub use model::{ModelDump, MODEL_FORMAT};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Dataset { path: PathBuf, source: DatasetError },
    #[error("{0}")]
    Provider(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Dataset { .. } => 2,
            Self::Provider(_) => 3,
            Self::Io { .. } => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "asag", version, about = "Grade short answers by embedding similarity to a reference answer")]
pub struct Cli {
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dataset counts, mean and median grade, grade histogram
    Stats(StatsArgs),
    /// Compute and cache sentence vectors for every answer
    Embed(RunArgs),
    /// Repeated random-split evaluation; writes a JSON report and prints a table
    Evaluate(EvaluateArgs),
    /// Grade one answer with a model written by `evaluate --model-out`
    Grade(GradeArgs),
    /// Print (and optionally merge) saved reports
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, value_name = "PATH")]
    pub dataset: PathBuf,
    #[arg(long)]
    pub normalize_exam_grades: bool,
    /// Print JSON instead of a table
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Write the JSON report here and the table to stdout; without it the
    /// report goes to stdout and the table to stderr
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Evaluate a feature dump instead of --dataset/--provider
    #[arg(long, value_name = "PATH", conflicts_with_all = ["dataset", "providers"])]
    pub features: Option<PathBuf>,
    /// Also fit the regressors on all rows and write the model here
    #[arg(long, value_name = "PATH")]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradeArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[arg(long, value_name = "ID")]
    pub question: String,
    #[arg(long, value_name = "TEXT")]
    pub answer: String,
    /// Override the provider recorded in the model
    #[arg(long, value_name = "SPEC")]
    pub provider: Option<String>,
    /// Which of the model's regressors to use (default: the first)
    #[arg(long, value_name = "NAME")]
    pub regressor: Option<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report files produced by `evaluate` with the same split settings
    #[arg(required = true, value_name = "REPORT")]
    pub reports: Vec<PathBuf>,
    /// Write the merged report here
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn emit(text: &str) -> Result<(), CliError> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Stats(args) => {
            let format = if args.normalize_exam_grades { DatasetFormat::TsvExamScale } else { DatasetFormat::Tsv };
            let stats = cmd_stats(&args.dataset, format)?;
            if args.json {
                emit(&(serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n"))
            } else {
                emit(&render_stats(&stats))
            }
        }
        Command::Embed(args) => {
            let config = RunConfig::resolve(&args)?;
            emit(&render_embed(&cmd_embed(&config)?))
        }
        Command::Evaluate(args) => {
            let config = RunConfig::resolve(&args.run)?;
            let options = EvaluateOptions {
                features: args.features,
                fit_model: args.model_out.is_some(),
            };
            let evaluation = cmd_evaluate(&config, &options)?;
            let table = render_table(&evaluation.report);
            match &args.out {
                Some(path) => {
                    write_file(path, &evaluation.report.to_json())?;
                    emit(&table)?;
                }
                None => {
                    eprint!("{table}");
                    emit(&evaluation.report.to_json())?;
                }
            }
            if let (Some(path), Some(model)) = (&args.model_out, &evaluation.model) {
                write_file(path, &model.to_json())?;
                log::info!("model written to {}", path.display());
            }
            Ok(())
        }
        Command::Grade(args) => {
            let model = ModelDump::load(&args.model)?;
            let provider = args
                .provider
                .as_deref()
                .map(ProviderSpec::parse)
                .transpose()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let outcome = cmd_grade(&model, provider.as_ref(), &args.question, &args.answer, args.regressor.as_deref())?;
            if args.json {
                emit(&(serde_json::to_string_pretty(&outcome).expect("outcome serializes") + "\n"))
            } else {
                emit(&render_grade(&outcome))
            }
        }
        Command::Report(args) => {
            let report = cmd_report(&args.reports)?;
            if let Some(path) = &args.out {
                write_file(path, &report.to_json())?;
            }
            emit(&render_table(&report))
        }
    }
}
