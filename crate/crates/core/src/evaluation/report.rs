use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EvaluationError, IterationRecord, SplitSpec, DOMINANCE_TOLERANCE};
use crate::regression::RegressorKind;

pub const REPORT_FORMAT: &str = "asag-report/1";

/// Which direction is better for each metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub rmse: String,
    pub pearson: String,
}

impl Default for Orientation {
    fn default() -> Self {
        Self {
            rmse: "lower_is_better".into(),
            pearson: "higher_is_better".into(),
        }
    }
}

/// One (provider, regressor) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub regressor: RegressorKind,
    /// Mean test RMSE over iterations that were not skipped.
    pub mean_rmse: Option<f64>,
    /// Mean test correlation over iterations where it is defined.
    pub mean_pearson: Option<f64>,
    pub iterations_run: usize,
    pub iterations_skipped: usize,
    pub pearson_undefined: usize,
    /// For isotonic cells: whether every iteration's training RMSE was at
    /// most the constant-mean predictor's.
    pub training_dominance: Option<bool>,
    pub iterations: Vec<IterationRecord>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl CellSummary {
    pub fn from_iterations(regressor: RegressorKind, iterations: Vec<IterationRecord>) -> Self {
        let iterations_skipped = iterations.iter().filter(|i| i.skipped.is_some()).count();
        let pearson_undefined = iterations
            .iter()
            .filter(|i| i.skipped.is_none() && i.pearson.is_none())
            .count();
        if pearson_undefined > 0 {
            log::warn!(
                "{}: correlation undefined in {pearson_undefined} iteration(s); excluded from the mean",
                regressor.label()
            );
        }
        let training_dominance = matches!(regressor, RegressorKind::Isotonic).then(|| {
            iterations.iter().all(|i| match i.train_rmse {
                Some(t) => t <= i.baseline_train_rmse + DOMINANCE_TOLERANCE,
                None => true,
            })
        });
        Self {
            regressor,
            mean_rmse: mean(iterations.iter().filter_map(|i| i.rmse)),
            mean_pearson: mean(iterations.iter().filter_map(|i| i.pearson)),
            iterations_run: iterations.len(),
            iterations_skipped,
            pearson_undefined,
            training_dominance,
            iterations,
        }
    }
}

/// One provider's row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRow {
    pub provider: String,
    pub n_rows: usize,
    /// Rows whose similarity was set to 0 by the flagging policy.
    pub n_flagged: usize,
    pub cells: Vec<CellSummary>,
}

/// Results table (rows = providers, columns = regressors) with the
/// per-iteration metrics behind every mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub seed: u64,
    pub split: SplitSpec,
    pub orientation: Orientation,
    pub regressors: Vec<RegressorKind>,
    /// Free-form echo of the run configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub providers: Vec<ProviderRow>,
}

impl ExperimentReport {
    pub fn new(split: SplitSpec, regressors: Vec<RegressorKind>, providers: Vec<ProviderRow>) -> Self {
        Self {
            format: REPORT_FORMAT.into(),
            seed: split.seed,
            split,
            orientation: Orientation::default(),
            regressors,
            config: None,
            providers,
        }
    }

    /// Appends the rows of a report produced with the same split and regressors.
    pub fn merge(&mut self, other: ExperimentReport) -> Result<(), EvaluationError> {
        if other.split != self.split {
            return Err(EvaluationError::Incompatible("split settings differ".into()));
        }
        if other.regressors != self.regressors {
            return Err(EvaluationError::Incompatible("regressor lists differ".into()));
        }
        self.providers.extend(other.providers);
        Ok(())
    }

    /// False if any isotonic cell fit its training data worse than the mean.
    pub fn training_dominance_holds(&self) -> bool {
        self.providers
            .iter()
            .flat_map(|p| &p.cells)
            .all(|c| c.training_dominance != Some(false))
    }

    pub fn cell(&self, provider: &str, regressor: &str) -> Option<&CellSummary> {
        self.providers
            .iter()
            .find(|p| p.provider == provider)?
            .cells
            .iter()
            .find(|c| c.regressor.label() == regressor)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Plain-text rendering of the results table for terminals.
pub fn render_table(report: &ExperimentReport) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
    let name_width = report
        .providers
        .iter()
        .map(|p| p.provider.chars().count())
        .chain(["Provider".len()])
        .max()
        .unwrap_or(8);
    let mut out = String::new();
    let mut header = format!("{:<name_width$}", "Provider");
    let mut sub = format!("{:<name_width$}", "");
    for r in &report.regressors {
        let _ = write!(header, " | {:<15}", r.label());
        let _ = write!(sub, " | {:<7} {:<7}", "RMSE", "rho");
    }
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "{sub}");
    let _ = writeln!(out, "{}", "-".repeat(sub.chars().count()));
    for p in &report.providers {
        let _ = write!(out, "{:<name_width$}", p.provider);
        for c in &p.cells {
            let _ = write!(out, " | {:<7} {:<7}", fmt(c.mean_rmse), fmt(c.mean_pearson));
        }
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "\nRMSE: lower is better. rho (Pearson): higher is better.\n\
         Means over {} iterations, train fraction {}, seed {}.",
        report.split.iterations, report.split.train_fraction, report.seed
    );
    for p in &report.providers {
        for c in &p.cells {
            if c.iterations_skipped > 0 || c.pearson_undefined > 0 {
                let _ = writeln!(
                    out,
                    "note: {} / {}: {} iteration(s) skipped, rho undefined in {}",
                    p.provider,
                    c.regressor.label(),
                    c.iterations_skipped,
                    c.pearson_undefined
                );
            }
            if c.training_dominance == Some(false) {
                let _ = writeln!(
                    out,
                    "warning: {} / isotonic: training error exceeded the constant predictor",
                    p.provider
                );
            }
        }
    }
    out
}
