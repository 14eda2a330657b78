use std::path::{Path, PathBuf};

use asag_core::dataset::DatasetFormat;
use asag_core::embedding::ProviderSpec;
use asag_core::evaluation::{SplitMode, SplitSpec};
use asag_core::regression::{RegressorKind, DEFAULT_RIDGE_LAMBDA};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_REGRESSORS: &str = "isotonic,linear,ridge";
pub const CACHE_FILE: &str = "embeddings.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitModeArg {
    Answer,
    PerQuestion,
}

impl From<SplitModeArg> for SplitMode {
    fn from(m: SplitModeArg) -> Self {
        match m {
            SplitModeArg::Answer => SplitMode::Answer,
            SplitModeArg::PerQuestion => SplitMode::PerQuestion,
        }
    }
}

/// Run settings shared by `embed` and `evaluate`. Every flag overrides the
/// corresponding `--config` entry.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON file with run settings; relative paths in it are resolved against its directory
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Graded answers as a seven-column TSV
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// static:PATH, test:SEED[:DIM] or remote:URL,MODEL (repeatable)
    #[arg(long = "provider", value_name = "SPEC")]
    pub providers: Vec<String>,
    /// Comma-separated list of isotonic, linear, ridge
    #[arg(long, value_name = "LIST")]
    pub regressors: Option<String>,
    /// Ridge penalty on the slope (default 1)
    #[arg(long, value_name = "F")]
    pub ridge_lambda: Option<f64>,
    /// Fraction of rows used for training in each split
    #[arg(long, value_name = "F")]
    pub train_frac: Option<f64>,
    /// Number of random splits (default 1000)
    #[arg(long, value_name = "N")]
    pub iterations: Option<usize>,
    /// Seed for the split generator (default 0)
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Split answers globally or within each question
    #[arg(long, value_enum)]
    pub split_mode: Option<SplitModeArg>,
    /// Directory holding the sentence-vector cache
    #[arg(long, value_name = "DIR")]
    pub cache: Option<PathBuf>,
    /// Grades in the file are on a 0-10 scale; halve them
    #[arg(long)]
    pub normalize_exam_grades: bool,
}

/// The `--config` file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub providers: Vec<String>,
    pub regressors: Option<String>,
    pub ridge_lambda: Option<f64>,
    pub train_frac: Option<f64>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub split_mode: Option<SplitMode>,
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub normalize_exam_grades: bool,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config `{}`: {e}", path.display())))?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config `{}`: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        config.dataset.as_mut().map(rebase);
        config.cache.as_mut().map(rebase);
        for spec in &mut config.providers {
            if let Some(file) = spec.strip_prefix("static:") {
                if Path::new(file).is_relative() {
                    *spec = format!("static:{}", base.join(file).display());
                }
            }
        }
        Ok(config)
    }
}

/// Validated run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub providers: Vec<ProviderSpec>,
    pub regressors: Vec<RegressorKind>,
    pub split: SplitSpec,
    pub cache_dir: Option<PathBuf>,
    pub normalize_exam_grades: bool,
}

impl RunConfig {
    pub fn resolve(args: &RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let provider_strings = if args.providers.is_empty() { &file.providers } else { &args.providers };
        let providers = provider_strings
            .iter()
            .map(|s| ProviderSpec::parse(s).map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let ridge_lambda = args.ridge_lambda.or(file.ridge_lambda).unwrap_or(DEFAULT_RIDGE_LAMBDA);
        if !(ridge_lambda.is_finite() && ridge_lambda >= 0.0) {
            return Err(CliError::Usage(format!("ridge lambda must be finite and non-negative, got {ridge_lambda}")));
        }
        let list = args.regressors.as_deref().or(file.regressors.as_deref()).unwrap_or(DEFAULT_REGRESSORS);
        let regressors = RegressorKind::parse_list(list, ridge_lambda).map_err(CliError::Usage)?;
        if regressors.is_empty() {
            return Err(CliError::Usage("no regressors requested".into()));
        }
        let defaults = SplitSpec::default();
        let split = SplitSpec {
            train_fraction: args.train_frac.or(file.train_frac).unwrap_or(defaults.train_fraction),
            iterations: args.iterations.or(file.iterations).unwrap_or(defaults.iterations),
            seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
            mode: args.split_mode.map(SplitMode::from).or(file.split_mode).unwrap_or(defaults.mode),
        };
        split.validate().map_err(|e| CliError::Usage(e.to_string()))?;

        let config = Self {
            dataset: args.dataset.clone().or(file.dataset),
            providers,
            regressors,
            split,
            cache_dir: args.cache.clone().or(file.cache),
            normalize_exam_grades: args.normalize_exam_grades || file.normalize_exam_grades,
        };
        if let Some(path) = &config.dataset {
            require_file(path, "dataset")?;
        }
        for spec in &config.providers {
            if let ProviderSpec::Static { path } = spec {
                require_file(Path::new(path), "embedding file")?;
            }
        }
        Ok(config)
    }

    pub fn dataset_format(&self) -> DatasetFormat {
        if self.normalize_exam_grades {
            DatasetFormat::TsvExamScale
        } else {
            DatasetFormat::Tsv
        }
    }

    pub fn dataset_path(&self) -> Result<&Path, CliError> {
        self.dataset.as_deref().ok_or_else(|| CliError::Usage("--dataset is required".into()))
    }

    pub fn require_providers(&self) -> Result<&[ProviderSpec], CliError> {
        if self.providers.is_empty() {
            return Err(CliError::Usage("at least one --provider is required".into()));
        }
        Ok(&self.providers)
    }

    pub fn cache_file(&self) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| d.join(CACHE_FILE))
    }
}

pub fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} `{}` not found", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(providers: &[&str]) -> RunArgs {
        RunArgs {
            providers: providers.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn defaults() {
        let c = RunConfig::resolve(&args(&["test:42"])).unwrap();
        assert_eq!(c.providers, [ProviderSpec::Test { seed: 42, dimension: 64 }]);
        assert_eq!(
            c.regressors,
            [RegressorKind::Isotonic, RegressorKind::Linear, RegressorKind::Ridge { lambda: 1.0 }]
        );
        assert_eq!(c.split, SplitSpec::default());
        assert_eq!(c.dataset_format(), DatasetFormat::Tsv);
    }

    #[test]
    fn validation_errors_are_usage_errors() {
        let zero = RunArgs { iterations: Some(0), ..args(&["test:1"]) };
        assert!(matches!(RunConfig::resolve(&zero), Err(CliError::Usage(_))));
        let frac = RunArgs { train_frac: Some(1.5), ..args(&["test:1"]) };
        assert!(matches!(RunConfig::resolve(&frac), Err(CliError::Usage(_))));
        let lambda = RunArgs { ridge_lambda: Some(-1.0), ..args(&["test:1"]) };
        assert!(matches!(RunConfig::resolve(&lambda), Err(CliError::Usage(_))));
        let reg = RunArgs { regressors: Some("isotonic,svm".into()), ..args(&["test:1"]) };
        assert!(matches!(RunConfig::resolve(&reg), Err(CliError::Usage(_))));
        assert!(matches!(RunConfig::resolve(&args(&["bogus"])), Err(CliError::Usage(_))));
        match RunConfig::resolve(&RunArgs { dataset: Some("/no/such/file.tsv".into()), ..args(&[]) }) {
            Err(CliError::Usage(msg)) => assert!(msg.contains("/no/such/file.tsv")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            RunConfig::resolve(&args(&["static:/no/such/vectors.txt"])),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.tsv"), "x").unwrap();
        std::fs::write(dir.path().join("v.txt"), "a 1").unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"dataset": "d.tsv", "providers": ["static:v.txt"], "regressors": "ridge",
                "ridge_lambda": 0.5, "iterations": 7, "seed": 3, "split_mode": "per_question",
                "cache": "cache"}"#,
        )
        .unwrap();
        let from_file = RunConfig::resolve(&RunArgs { config: Some(path.clone()), ..Default::default() }).unwrap();
        assert_eq!(from_file.dataset.as_deref(), Some(dir.path().join("d.tsv").as_path()));
        assert_eq!(from_file.regressors, [RegressorKind::Ridge { lambda: 0.5 }]);
        assert_eq!(from_file.split.iterations, 7);
        assert_eq!(from_file.split.mode, SplitMode::PerQuestion);
        assert_eq!(from_file.cache_file(), Some(dir.path().join("cache").join(CACHE_FILE)));
        assert!(matches!(&from_file.providers[0], ProviderSpec::Static { path } if path.ends_with("v.txt")));

        let overridden = RunConfig::resolve(&RunArgs {
            config: Some(path),
            seed: Some(9),
            providers: vec!["test:1".into()],
            ..Default::default()
        })
        .unwrap();
        assert_eq!(overridden.split.seed, 9);
        assert_eq!(overridden.split.iterations, 7);
        assert_eq!(overridden.providers, [ProviderSpec::Test { seed: 1, dimension: 64 }]);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"iteratons": 5}"#).unwrap();
        assert!(matches!(
            RunConfig::resolve(&RunArgs { config: Some(path), ..Default::default() }),
            Err(CliError::Usage(_))
        ));
    }
}
