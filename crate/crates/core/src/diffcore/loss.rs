use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Mean negative log-softmax of the true class over a `[B, K]` batch.
///
/// Returns the loss and its gradient with respect to the logits,
/// `(softmax - onehot) / B`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, k) = match logits.shape() {
        &[b, k] => (b, k),
        other => return Err(Error::Shape(format!("logits must be [B, K], got {other:?}"))),
    };
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    if b == 0 {
        return Err(Error::Precondition("empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Precondition(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let mut grad = vec![0.0; b * k];
    let mut loss = 0.0;
    for (bi, &label) in labels.iter().enumerate() {
        let row = &logits.data()[bi * k..][..k];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        for ki in 0..k {
            let p = (row[ki] - log_z).exp();
            grad[bi * k + ki] = (p - if ki == label { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    Ok((loss / b as f64, Tensor::from_vec(&[b, k], grad)?))
}

/// Row-wise argmax with ties going to the lowest index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = *logits.shape().last().unwrap_or(&1);
    logits
        .data()
        .chunks_exact(k.max(1))
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Numerically stable softmax of one row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
