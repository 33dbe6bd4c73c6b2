use crate::error::{Error, Result};
use crate::supernet::TrainingCurve;

/// `(acc_a - acc_b) / acc_b`
pub fn relative_improvement(acc_a: f64, acc_b: f64) -> Result<f64> {
    if acc_b == 0.0 {
        return Err(Error::UndefinedMetric(
            "relative improvement over a zero baseline accuracy".into(),
        ));
    }
    Ok((acc_a - acc_b) / acc_b)
}

/// Ratio of the steps at which `curve_b` and `curve_a` first reach
/// `threshold` train accuracy. Infinite when `curve_b` never does.
pub fn convergence_speedup(curve_a: &TrainingCurve, curve_b: &TrainingCurve, threshold: f64) -> Result<f64> {
    if curve_a.is_empty() || curve_b.is_empty() {
        return Err(Error::Precondition("convergence speedup needs non-empty curves".into()));
    }
    let a = curve_a.first_step_reaching(threshold).ok_or_else(|| {
        Error::NotComparable(format!("first curve never reaches train accuracy {threshold}"))
    })?;
    Ok(match curve_b.first_step_reaching(threshold) {
        Some(b) => b as f64 / a as f64,
        None => f64::INFINITY,
    })
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
