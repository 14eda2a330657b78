//! Univariate regressors mapping the similarity feature to a grade.
//!
//! Every prediction is clamped to the grade range `[0, 5]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::MAX_GRADE;

/// Default ridge penalty.
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;

const DEGENERATE_SXX: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("no training points")]
    EmptyInput,
    #[error("weight {0} is not positive")]
    NonPositiveWeight(f64),
    #[error("non-finite training value")]
    NonFinite,
    #[error("at least two points are needed, got {0}")]
    TooFewPoints(usize),
    #[error("penalty {0} is negative")]
    NegativePenalty(f64),
    #[error("all x values coincide; least squares slope is undefined")]
    DegenerateDesign,
}

fn clamp_grade(y: f64) -> f64 {
    y.clamp(0.0, MAX_GRADE)
}

/// Non-decreasing fit with linear interpolation between knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicModel {
    /// `(x, fitted y)` with strictly increasing x and non-decreasing y.
    pub knots: Vec<(f64, f64)>,
}

/// Weighted least-squares projection onto non-decreasing functions of x,
/// computed by pool-adjacent-violators.
///
/// Points sharing an x are first merged into their weighted mean with the
/// summed weight. Each pool's fitted value is the weighted mean of its targets.
pub fn fit_isotonic(points: &[(f64, f64, f64)]) -> Result<IsotonicModel, RegressionError> {
    if points.is_empty() {
        return Err(RegressionError::EmptyInput);
    }
    for &(x, y, w) in points {
        if !(x.is_finite() && y.is_finite() && w.is_finite()) {
            return Err(RegressionError::NonFinite);
        }
        if w <= 0.0 {
            return Err(RegressionError::NonPositiveWeight(w));
        }
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // (x, weighted sum of y, weight), one entry per distinct x
    let mut merged: Vec<(f64, f64, f64)> = Vec::with_capacity(sorted.len());
    for (x, y, w) in sorted {
        match merged.last_mut() {
            Some(last) if last.0 == x => {
                last.1 += w * y;
                last.2 += w;
            }
            _ => merged.push((x, w * y, w)),
        }
    }

    // Each block: (mean, weight, number of merged points it covers)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(merged.len());
    for &(_, wy, w) in &merged {
        blocks.push((wy / w, w, 1));
        while blocks.len() > 1 {
            let (m1, w1, n1) = blocks[blocks.len() - 1];
            let (m0, w0, n0) = blocks[blocks.len() - 2];
            if m0 <= m1 {
                break;
            }
            blocks.pop();
            let w = w0 + w1;
            *blocks.last_mut().expect("len > 1") = ((w0 * m0 + w1 * m1) / w, w, n0 + n1);
        }
    }

    let mut knots = Vec::with_capacity(merged.len());
    let mut xs = merged.iter().map(|m| m.0);
    for (mean, _, n) in blocks {
        for x in xs.by_ref().take(n) {
            knots.push((x, mean));
        }
    }
    Ok(IsotonicModel { knots })
}

impl IsotonicModel {
    pub fn predict(&self, x: f64) -> f64 {
        predict_isotonic(self, x)
    }
}

/// Constant beyond the outer knots, linear in between, clamped to `[0, 5]`.
pub fn predict_isotonic(model: &IsotonicModel, x: f64) -> f64 {
    let knots = &model.knots;
    let (first, last) = match (knots.first(), knots.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return 0.0,
    };
    let y = if x <= first.0 {
        first.1
    } else if x >= last.0 {
        last.1
    } else {
        // first index with knot x >= query; 1 <= j < len
        let j = knots.partition_point(|k| k.0 < x);
        let (x1, y1) = knots[j];
        if x1 == x {
            y1
        } else {
            let (x0, y0) = knots[j - 1];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    };
    clamp_grade(y)
}

/// `slope * x + intercept`; `lambda = 0` is ordinary least squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub slope: f64,
    pub intercept: f64,
    pub lambda: f64,
}

/// Least squares on centred data with an L2 penalty on the slope only:
/// `slope = Sxy / (Sxx + lambda)`, `intercept = ȳ - slope·x̄`.
pub fn fit_linear(points: &[(f64, f64)], lambda: f64) -> Result<LinearModel, RegressionError> {
    if lambda.is_nan() || lambda < 0.0 || !lambda.is_finite() {
        return Err(RegressionError::NegativePenalty(lambda));
    }
    if points.len() < 2 {
        return Err(RegressionError::TooFewPoints(points.len()));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(RegressionError::NonFinite);
    }
    let n = points.len() as f64;
    let x_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        let dx = x - x_mean;
        sxx += dx * dx;
        sxy += dx * (y - y_mean);
    }
    if lambda == 0.0 && sxx < DEGENERATE_SXX {
        return Err(RegressionError::DegenerateDesign);
    }
    let slope = if sxx + lambda > 0.0 { sxy / (sxx + lambda) } else { 0.0 };
    Ok(LinearModel {
        slope,
        intercept: y_mean - slope * x_mean,
        lambda,
    })
}

impl LinearModel {
    pub fn predict(&self, x: f64) -> f64 {
        predict_linear(self, x)
    }
}

pub fn predict_linear(model: &LinearModel, x: f64) -> f64 {
    clamp_grade(model.slope * x + model.intercept)
}

/// Which regressor to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorKind {
    Isotonic,
    Linear,
    Ridge { lambda: f64 },
}

impl RegressorKind {
    /// Column label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            Self::Isotonic => "isotonic",
            Self::Linear => "linear",
            Self::Ridge { .. } => "ridge",
        }
    }

    /// Fits unit-weight points.
    pub fn fit(&self, points: &[(f64, f64)]) -> Result<RegressionModel, RegressionError> {
        match *self {
            Self::Isotonic => {
                let weighted: Vec<_> = points.iter().map(|&(x, y)| (x, y, 1.0)).collect();
                fit_isotonic(&weighted).map(RegressionModel::Isotonic)
            }
            Self::Linear => fit_linear(points, 0.0).map(RegressionModel::Linear),
            Self::Ridge { lambda } => fit_linear(points, lambda).map(RegressionModel::Ridge),
        }
    }

    /// Parses a comma-separated list such as `isotonic,linear,ridge`.
    pub fn parse_list(list: &str, ridge_lambda: f64) -> Result<Vec<Self>, String> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| match s {
                "isotonic" => Ok(Self::Isotonic),
                "linear" => Ok(Self::Linear),
                "ridge" => Ok(Self::Ridge { lambda: ridge_lambda }),
                other => Err(format!("unknown regressor `{other}` (expected isotonic, linear or ridge)")),
            })
            .collect()
    }
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ridge { lambda } => write!(f, "ridge(lambda={lambda})"),
            other => f.write_str(other.label()),
        }
    }
}

impl FromStr for RegressorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match Self::parse_list(s, DEFAULT_RIDGE_LAMBDA)?.as_slice() {
            [one] => Ok(*one),
            _ => Err(format!("expected one regressor, got `{s}`")),
        }
    }
}

/// A fitted regressor. Serializes to the JSON model dump, e.g.
/// `{"kind":"ridge","slope":..,"intercept":..,"lambda":1.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionModel {
    Isotonic(IsotonicModel),
    Linear(LinearModel),
    Ridge(LinearModel),
}

impl RegressionModel {
    pub fn predict(&self, x: f64) -> f64 {
        match self {
            Self::Isotonic(m) => m.predict(x),
            Self::Linear(m) | Self::Ridge(m) => m.predict(x),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Isotonic(_) => "isotonic",
            Self::Linear(_) => "linear",
            Self::Ridge(_) => "ridge",
        }
    }
}
