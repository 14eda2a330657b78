use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use asag_core::dataset::{dataset_stats, parse_dataset, Dataset, DatasetFormat, DatasetStats};
use asag_core::embedding::{content_digest, EmbeddingCache, EmbeddingError, EmbeddingProvider, LazyProvider, ProviderSpec};
use asag_core::evaluation::{fit_final_models, run_experiment, ExperimentReport};
use asag_core::features::{
    build_features_cached, embed_dataset, encode_text, read_feature_dump, score_pair, FeatureError, FeatureFlag,
    FeatureRow,
};
use serde::Serialize;

use crate::config::{require_file, RunConfig};
use crate::model::{ModelDump, MODEL_FORMAT};
use crate::CliError;

/// Most per-answer failures printed before the rest are summarized.
const MAX_LISTED_FAILURES: usize = 10;

/// Reads and parses a dataset, returning it with a digest of the file bytes.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<(Dataset, u64), CliError> {
    require_file(path, "dataset")?;
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let dataset = parse_dataset(bytes.as_slice(), format).map_err(|source| CliError::Dataset {
        path: path.to_path_buf(),
        source,
    })?;
    let digest = content_digest(std::str::from_utf8(&bytes).expect("parsed as UTF-8"));
    Ok((dataset, digest))
}

pub fn cmd_stats(path: &Path, format: DatasetFormat) -> Result<DatasetStats, CliError> {
    let (dataset, _) = load_dataset(path, format)?;
    dataset_stats(&dataset).map_err(|source| CliError::Dataset {
        path: path.to_path_buf(),
        source,
    })
}

pub fn render_stats(stats: &DatasetStats) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "questions     {}", stats.n_questions);
    let _ = writeln!(out, "answers       {}", stats.n_answers);
    let _ = writeln!(out, "mean grade    {:.3}", stats.mean_grade);
    let _ = writeln!(out, "median grade  {:.2}", stats.median_grade);
    let _ = writeln!(out, "grade histogram:");
    for (k, count) in stats.grade_histogram.iter().enumerate() {
        let _ = writeln!(out, "  {:>3.1}  {count}", k as f64 / 2.0);
    }
    out
}

fn open_cache(path: &Path) -> Result<EmbeddingCache, CliError> {
    EmbeddingCache::open(path).map_err(|e| match e {
        EmbeddingError::Io(source) => CliError::io(path, source),
        other => CliError::Usage(format!("cache `{}`: {other}", path.display())),
    })
}

fn persist_cache(cache: &EmbeddingCache) -> Result<(), CliError> {
    let path = cache.path().unwrap_or(Path::new("<memory>")).to_path_buf();
    match cache.persist() {
        Ok(true) => {
            log::info!("wrote {} cache records to {}", cache.len(), path.display());
            Ok(())
        }
        Ok(false) => Ok(()),
        Err(EmbeddingError::Io(e)) => Err(CliError::io(&path, e)),
        Err(e) => Err(CliError::Provider(e.to_string())),
    }
}

fn provider_error(e: FeatureError) -> CliError {
    CliError::Provider(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmbedSummary {
    pub provider: String,
    pub texts: usize,
    pub cache_hits: usize,
    pub computed: usize,
    pub failed: usize,
}

/// Embeds every desired and student answer with every provider into the
/// cache. The cache file is only replaced (atomically) when every text was
/// embedded; after any failure it is left as it was.
pub fn cmd_embed(config: &RunConfig) -> Result<Vec<EmbedSummary>, CliError> {
    let path = config.dataset_path()?;
    let specs = config.require_providers()?;
    let cache_file = config
        .cache_file()
        .ok_or_else(|| CliError::Usage("embed needs --cache".into()))?;
    let (dataset, _) = load_dataset(path, config.dataset_format())?;
    let cache = open_cache(&cache_file)?;
    let texts = dataset.questions().len() + dataset.answers().len();
    let mut summaries = Vec::new();
    for spec in specs {
        let provider = LazyProvider::new(spec.clone());
        let before = cache.len();
        let failures = embed_dataset(&dataset, &provider, Some(&cache));
        let computed = cache.len() - before;
        let summary = EmbedSummary {
            provider: provider.name().to_string(),
            texts,
            cache_hits: texts - computed - failures.len(),
            computed,
            failed: failures.len(),
        };
        log::info!(
            "{}: {} cache hits, {} computed, {} failed",
            summary.provider,
            summary.cache_hits,
            summary.computed,
            summary.failed
        );
        if !failures.is_empty() {
            match provider.get() {
                // One line instead of one per answer when the provider never opened.
                Err(e) => log::error!("{e}"),
                Ok(_) => {
                    for f in failures.iter().take(MAX_LISTED_FAILURES) {
                        log::error!("{f}");
                    }
                    if failures.len() > MAX_LISTED_FAILURES {
                        log::error!("... and {} more failures", failures.len() - MAX_LISTED_FAILURES);
                    }
                }
            }
        }
        summaries.push(summary);
    }
    let failed: Vec<_> = summaries.iter().filter(|s| s.failed > 0).collect();
    if !failed.is_empty() {
        let detail: Vec<String> = failed
            .iter()
            .map(|s| format!("{} of {} texts failed with {}", s.failed, s.texts, s.provider))
            .collect();
        log::warn!("cache file left unchanged");
        return Err(CliError::Provider(detail.join("; ")));
    }
    persist_cache(&cache)?;
    Ok(summaries)
}

pub fn render_embed(summaries: &[EmbedSummary]) -> String {
    summaries
        .iter()
        .map(|s| format!("{}: {} texts, {} cache hits, {} computed\n", s.provider, s.texts, s.cache_hits, s.computed))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    /// Evaluate a feature dump instead of embedding a dataset.
    pub features: Option<PathBuf>,
    /// Also fit every regressor on all rows for later grading.
    pub fit_model: bool,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: ExperimentReport,
    pub model: Option<ModelDump>,
}

/// Input identification echoed into reports. Only the file name and a
/// content digest are recorded so reports do not depend on where the
/// inputs live.
#[derive(Debug, Serialize)]
struct InputEcho {
    kind: &'static str,
    file: String,
    digest: String,
    rows: usize,
}

#[derive(Debug, Serialize)]
struct RunEcho {
    input: InputEcho,
    providers: Vec<String>,
    normalize_exam_grades: bool,
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

struct ProviderRun {
    name: String,
    spec: Option<ProviderSpec>,
    rows: Vec<FeatureRow>,
}

pub fn cmd_evaluate(config: &RunConfig, options: &EvaluateOptions) -> Result<Evaluation, CliError> {
    let mut questions = BTreeMap::new();
    let (runs, input) = match &options.features {
        Some(path) => {
            if config.dataset.is_some() || !config.providers.is_empty() {
                return Err(CliError::Usage("--features replaces --dataset and --provider".into()));
            }
            if options.fit_model {
                return Err(CliError::Usage("--model-out needs a dataset, not a feature dump".into()));
            }
            require_file(path, "feature dump")?;
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let rows = read_feature_dump(text.as_bytes())
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            let input = InputEcho {
                kind: "features",
                file: file_name(path),
                digest: format!("{:016x}", content_digest(&text)),
                rows: rows.len(),
            };
            (vec![ProviderRun { name: format!("features:{stem}"), spec: None, rows }], input)
        }
        None => {
            let path = config.dataset_path()?;
            let specs = config.require_providers()?;
            let (dataset, digest) = load_dataset(path, config.dataset_format())?;
            questions = dataset
                .questions()
                .iter()
                .map(|q| (q.question_id.clone(), q.desired_answer_text.clone()))
                .collect();
            let cache = config.cache_file().map(|p| open_cache(&p)).transpose()?;
            let mut runs = Vec::new();
            for spec in specs {
                let provider = LazyProvider::new(spec.clone());
                let rows = build_features_cached(&dataset, &provider, cache.as_ref()).map_err(provider_error)?;
                if provider.oov_count() > 0 {
                    log::info!("{}: {} out-of-vocabulary tokens skipped", provider.name(), provider.oov_count());
                }
                runs.push(ProviderRun { name: provider.name().to_string(), spec: Some(spec.clone()), rows });
            }
            if let Some(c) = &cache {
                persist_cache(c)?;
            }
            let input = InputEcho {
                kind: "dataset",
                file: file_name(path),
                digest: format!("{digest:016x}"),
                rows: dataset.answers().len(),
            };
            (runs, input)
        }
    };

    let mut report: Option<ExperimentReport> = None;
    for run in &runs {
        let r = run_experiment(&run.name, &run.rows, &config.regressors, &config.split)
            .map_err(|e| CliError::Usage(format!("{}: {e}", run.name)))?;
        match &mut report {
            None => report = Some(r),
            Some(acc) => acc.merge(r).expect("runs share split and regressors"),
        }
    }
    let mut report = report.expect("at least one provider run");
    let echo = RunEcho {
        input,
        providers: runs.iter().map(|r| r.name.clone()).collect(),
        normalize_exam_grades: config.normalize_exam_grades,
    };
    report.config = Some(serde_json::to_value(echo).expect("config echo serializes"));
    if !report.training_dominance_holds() {
        log::warn!("isotonic training error exceeded the constant-mean predictor in some iteration");
    }

    let model = if options.fit_model {
        let [run] = runs.as_slice() else {
            return Err(CliError::Usage("--model-out needs exactly one provider".into()));
        };
        let (normalization, models) = fit_final_models(&run.rows, &config.regressors)
            .map_err(|e| CliError::Usage(format!("cannot fit the final model: {e}")))?;
        Some(ModelDump {
            format: MODEL_FORMAT.into(),
            seed: config.split.seed,
            provider: run.spec.as_ref().expect("dataset runs carry a spec").to_string(),
            normalization,
            models,
            questions,
        })
    } else {
        None
    };
    Ok(Evaluation { report, model })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradeOutcome {
    pub question_id: String,
    pub similarity_raw: f64,
    pub similarity_norm: f64,
    pub grade: f64,
    pub regressor: &'static str,
    pub flag: Option<FeatureFlag>,
}

/// Grades one answer against a question's desired answer with a trained
/// model. `provider` overrides the spec recorded in the model.
pub fn cmd_grade(
    model: &ModelDump,
    provider: Option<&ProviderSpec>,
    question_id: &str,
    answer: &str,
    regressor: Option<&str>,
) -> Result<GradeOutcome, CliError> {
    let desired = model
        .questions
        .get(question_id)
        .ok_or_else(|| CliError::Usage(format!("unknown question id `{question_id}`")))?;
    let regression = model.model(regressor)?;
    let spec = match provider {
        Some(spec) => spec.clone(),
        None => ProviderSpec::parse(&model.provider).map_err(|e| CliError::Usage(e.to_string()))?,
    };
    if let ProviderSpec::Static { path } = &spec {
        require_file(Path::new(path), "embedding file")?;
    }
    let embedder = spec.connect().map_err(|e| CliError::Provider(e.to_string()))?;
    let reference = encode_text(embedder.as_ref(), None, "desired", desired).map_err(provider_error)?;
    let student = encode_text(embedder.as_ref(), None, "answer", answer).map_err(provider_error)?;
    let (similarity_raw, flag) = score_pair(student.as_ref(), reference.as_ref());
    if let Some(flag) = flag {
        log::warn!("similarity set to 0: {flag}");
    }
    let similarity_norm = model.normalization.apply(similarity_raw);
    Ok(GradeOutcome {
        question_id: question_id.to_string(),
        similarity_raw,
        similarity_norm,
        grade: regression.predict(similarity_norm),
        regressor: regression.label(),
        flag,
    })
}

pub fn render_grade(g: &GradeOutcome) -> String {
    let mut out = format!(
        "question    {}\nsimilarity  {:.6} (normalized {:.6})\ngrade       {:.3} ({})\n",
        g.question_id, g.similarity_raw, g.similarity_norm, g.grade, g.regressor
    );
    if let Some(flag) = g.flag {
        let _ = writeln!(out, "flag        {flag}");
    }
    out
}

/// Loads one or more reports and merges them into one table.
pub fn cmd_report(paths: &[PathBuf]) -> Result<ExperimentReport, CliError> {
    let mut merged: Option<ExperimentReport> = None;
    for path in paths {
        require_file(path, "report")?;
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let report: ExperimentReport =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("report `{}`: {e}", path.display())))?;
        match &mut merged {
            None => merged = Some(report),
            Some(acc) => acc
                .merge(report)
                .map_err(|e| CliError::Usage(format!("report `{}`: {e}", path.display())))?,
        }
    }
    merged.ok_or_else(|| CliError::Usage("no reports given".into()))
}
