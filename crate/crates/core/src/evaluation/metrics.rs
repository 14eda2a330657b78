use super::EvaluationError;

fn check(pred: &[f64], actual: &[f64]) -> Result<(), EvaluationError> {
    if pred.len() != actual.len() {
        return Err(EvaluationError::LengthMismatch(pred.len(), actual.len()));
    }
    if pred.is_empty() {
        return Err(EvaluationError::EmptyInput);
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64, EvaluationError> {
    check(pred, actual)?;
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Pearson correlation coefficient, clamped to `[-1, 1]`.
///
/// Fails with [`EvaluationError::ConstantInput`] when either side has no
/// variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, EvaluationError> {
    check(a, b)?;
    if a.len() < 2 {
        return Err(EvaluationError::ConstantInput);
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(a) || constant(b) {
        return Err(EvaluationError::ConstantInput);
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(EvaluationError::ConstantInput);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}
