//! Repeated random-split evaluation of the similarity feature.
//!
//! Each iteration draws a fresh train/test split, rescales raw similarities
//! with min/max taken from the training rows only (test scores are clamped to
//! `[0, 1]`), fits every requested regressor on the training rows and scores
//! its predictions on the test rows.

mod metrics;
mod report;
mod split;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureRow, MinMax};
use crate::regression::{RegressionModel, RegressorKind};

pub use metrics::{pearson, rmse};
pub use report::{render_table, CellSummary, ExperimentReport, Orientation, ProviderRow, REPORT_FORMAT};
pub use split::{iteration_seed, split_indices, SplitMode, SplitSpec};

/// Fewest feature rows an experiment accepts.
pub const MIN_ROWS: usize = 10;

/// Slack allowed when checking isotonic training error against the
/// constant-mean predictor; both sides are computed in floating point.
pub const DOMINANCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("constant input: correlation undefined")]
    ConstantInput,
    #[error("{0} feature rows; at least {MIN_ROWS} are needed")]
    TooFewRows(usize),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("reports cannot be merged: {0}")]
    Incompatible(String),
}

/// Outcome of one regressor on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Test RMSE; absent when the iteration was skipped.
    pub rmse: Option<f64>,
    /// Test Pearson correlation; absent when skipped or when either side of
    /// the test comparison is constant.
    pub pearson: Option<f64>,
    pub train_rmse: Option<f64>,
    /// Training RMSE of predicting the training mean everywhere.
    pub baseline_train_rmse: f64,
    /// Why the iteration produced no metrics.
    pub skipped: Option<String>,
}

/// Everything the runner needs to score one regressor on one split.
struct Split {
    train_x: Vec<f64>,
    train_y: Vec<f64>,
    test_x: Vec<f64>,
    test_y: Vec<f64>,
}

fn prepare_split(rows: &[FeatureRow], train: &[usize], test: &[usize]) -> Split {
    let raw_train: Vec<f64> = train.iter().map(|&i| rows[i].similarity_raw).collect();
    let scale = MinMax::fit(&raw_train).expect("split validated non-empty");
    Split {
        train_x: raw_train.iter().map(|&s| scale.apply(s)).collect(),
        train_y: train.iter().map(|&i| rows[i].target_grade).collect(),
        test_x: test.iter().map(|&i| scale.apply(rows[i].similarity_raw)).collect(),
        test_y: test.iter().map(|&i| rows[i].target_grade).collect(),
    }
}

fn evaluate(kind: &RegressorKind, split: &Split, iteration: usize) -> IterationRecord {
    let mean = split.train_y.iter().sum::<f64>() / split.train_y.len() as f64;
    let baseline = vec![mean; split.train_y.len()];
    let baseline_train_rmse = rmse(&baseline, &split.train_y).expect("equal non-empty lengths");
    let points: Vec<(f64, f64)> = split.train_x.iter().copied().zip(split.train_y.iter().copied()).collect();
    let model = match kind.fit(&points) {
        Ok(m) => m,
        Err(e) => {
            log::warn!("iteration {iteration}: {} fit skipped: {e}", kind.label());
            return IterationRecord {
                iteration,
                rmse: None,
                pearson: None,
                train_rmse: None,
                baseline_train_rmse,
                skipped: Some(e.to_string()),
            };
        }
    };
    let predict = |xs: &[f64]| -> Vec<f64> { xs.iter().map(|&x| model.predict(x)).collect() };
    let fitted = predict(&split.train_x);
    let pred = predict(&split.test_x);
    IterationRecord {
        iteration,
        rmse: Some(rmse(&pred, &split.test_y).expect("equal non-empty lengths")),
        pearson: pearson(&pred, &split.test_y).ok(),
        train_rmse: Some(rmse(&fitted, &split.train_y).expect("equal non-empty lengths")),
        baseline_train_rmse,
        skipped: None,
    }
}

/// Runs `spec.iterations` seeded splits over `rows` for every regressor.
///
/// Iterations run in parallel; records are assembled in iteration order so
/// the report does not depend on scheduling.
pub fn run_experiment(
    provider: &str,
    rows: &[FeatureRow],
    regressors: &[RegressorKind],
    spec: &SplitSpec,
) -> Result<ExperimentReport, EvaluationError> {
    spec.validate()?;
    if rows.len() < MIN_ROWS {
        return Err(EvaluationError::TooFewRows(rows.len()));
    }
    if regressors.is_empty() {
        return Err(EvaluationError::EmptyInput);
    }
    let groups: Vec<&str> = rows.iter().map(|r| r.question_id.as_str()).collect();
    // Surface split errors before fanning out.
    split_indices(rows.len(), Some(&groups), spec, 0)?;

    let per_iteration: Vec<Vec<IterationRecord>> = (0..spec.iterations)
        .into_par_iter()
        .map(|it| {
            let (train, test) = split_indices(rows.len(), Some(&groups), spec, it)?;
            let split = prepare_split(rows, &train, &test);
            Ok(regressors.iter().map(|k| evaluate(k, &split, it)).collect())
        })
        .collect::<Result<_, EvaluationError>>()?;

    let cells = regressors
        .iter()
        .enumerate()
        .map(|(r, kind)| CellSummary::from_iterations(*kind, per_iteration.iter().map(|it| it[r].clone()).collect()))
        .collect();
    Ok(ExperimentReport::new(
        *spec,
        regressors.to_vec(),
        vec![ProviderRow {
            provider: provider.to_string(),
            n_rows: rows.len(),
            n_flagged: rows.iter().filter(|r| r.flag.is_some()).count(),
            cells,
        }],
    ))
}

/// Fits each regressor on all rows, with min/max scaling taken from all
/// rows. Used to produce a model for grading new answers.
pub fn fit_final_models(
    rows: &[FeatureRow],
    regressors: &[RegressorKind],
) -> Result<(MinMax, Vec<RegressionModel>), crate::regression::RegressionError> {
    let raw: Vec<f64> = rows.iter().map(|r| r.similarity_raw).collect();
    let scale = MinMax::fit(&raw).map_err(|_| crate::regression::RegressionError::EmptyInput)?;
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (scale.apply(r.similarity_raw), r.target_grade)).collect();
    let models = regressors.iter().map(|k| k.fit(&points)).collect::<Result<_, _>>()?;
    Ok((scale, models))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(pairs: &[(f64, f64)]) -> Vec<FeatureRow> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(s, g))| FeatureRow {
                question_id: format!("q{}", i % 3),
                student_id: i.to_string(),
                similarity_raw: s,
                similarity_norm: s,
                target_grade: g,
                flag: None,
            })
            .collect()
    }

    fn noisy(n: usize) -> Vec<FeatureRow> {
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let s = ((i * 37) % n) as f64 / n as f64;
                let g = (5.0 * s + if i % 2 == 0 { 0.7 } else { -0.6 }).clamp(0.0, 5.0);
                (s, g)
            })
            .collect();
        rows(&pairs)
    }

    #[test]
    fn same_seed_same_report() {
        let r = noisy(40);
        let kinds = [RegressorKind::Isotonic, RegressorKind::Linear, RegressorKind::Ridge { lambda: 1.0 }];
        let spec = SplitSpec { iterations: 25, seed: 7, ..Default::default() };
        let a = run_experiment("p", &r, &kinds, &spec).unwrap();
        let b = run_experiment("p", &r, &kinds, &spec).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = run_experiment("p", &r, &kinds, &SplitSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.providers[0].cells.len(), 3);
        assert!(a.providers[0].cells.iter().all(|c| c.iterations.len() == 25));
    }

    #[test]
    fn means_are_means_of_iterations() {
        let r = noisy(30);
        let spec = SplitSpec { iterations: 12, seed: 1, ..Default::default() };
        let rep = run_experiment("p", &r, &[RegressorKind::Linear], &spec).unwrap();
        let cell = &rep.providers[0].cells[0];
        let rmses: Vec<f64> = cell.iterations.iter().filter_map(|i| i.rmse).collect();
        let mean = rmses.iter().sum::<f64>() / rmses.len() as f64;
        assert!((cell.mean_rmse.unwrap() - mean).abs() < 1e-15);
        // reversing iteration order changes the mean by rounding at most
        let rev = rmses.iter().rev().sum::<f64>() / rmses.len() as f64;
        assert!((cell.mean_rmse.unwrap() - rev).abs() < 1e-12);
    }

    #[test]
    fn degenerate_fits_are_reported_not_dropped() {
        // every similarity equal: OLS is undefined, isotonic is a constant
        let r = rows(&[(0.4, 1.0), (0.4, 2.0), (0.4, 3.0), (0.4, 4.0), (0.4, 2.0), (0.4, 5.0), (0.4, 0.0), (0.4, 1.0), (0.4, 3.0), (0.4, 2.5)]);
        let spec = SplitSpec { iterations: 3, seed: 3, ..Default::default() };
        let rep = run_experiment("p", &r, &[RegressorKind::Linear, RegressorKind::Isotonic], &spec).unwrap();
        let linear = &rep.providers[0].cells[0];
        assert_eq!(linear.iterations_skipped, 3);
        assert!(linear.iterations.iter().all(|i| i.skipped.is_some()));
        assert_eq!(linear.mean_rmse, None);
        let iso = &rep.providers[0].cells[1];
        assert_eq!(iso.iterations_skipped, 0);
        // constant predictions: correlation undefined and counted
        assert_eq!(iso.pearson_undefined, 3);
        assert_eq!(iso.mean_pearson, None);
    }

    #[test]
    fn input_validation() {
        let spec = SplitSpec { iterations: 1, ..Default::default() };
        assert_eq!(
            run_experiment("p", &noisy(9), &[RegressorKind::Linear], &spec),
            Err(EvaluationError::TooFewRows(9))
        );
        let zero = SplitSpec { iterations: 0, ..Default::default() };
        assert!(matches!(
            run_experiment("p", &noisy(20), &[RegressorKind::Linear], &zero),
            Err(EvaluationError::InvalidSplit(_))
        ));
        assert_eq!(run_experiment("p", &noisy(20), &[], &spec), Err(EvaluationError::EmptyInput));
    }

    #[test]
    fn isotonic_training_error_never_exceeds_baseline() {
        let spec = SplitSpec { iterations: 50, seed: 11, ..Default::default() };
        let rep = run_experiment("p", &noisy(60), &[RegressorKind::Isotonic], &spec).unwrap();
        let cell = &rep.providers[0].cells[0];
        assert_eq!(cell.training_dominance, Some(true));
        for it in &cell.iterations {
            assert!(it.train_rmse.unwrap() <= it.baseline_train_rmse + DOMINANCE_TOLERANCE);
        }
    }

    #[test]
    fn final_models_use_full_population_scaling() {
        let r = rows(&[(0.2, 1.0), (0.6, 3.0), (1.0, 5.0)]);
        let (scale, models) = fit_final_models(&r, &[RegressorKind::Linear]).unwrap();
        assert_eq!((scale.min, scale.max), (0.2, 1.0));
        assert!((models[0].predict(0.5) - 3.0).abs() < 1e-12);
    }
}
