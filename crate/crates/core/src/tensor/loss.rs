//! Softmax, cross-entropy against soft targets, entropy and squared error.
//!
//! Natural logarithms throughout. Probabilities are clamped at
//! [`PROB_FLOOR`] before any logarithm.

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean over rows of `−Σ_i t_i ln p_i`.
pub fn soft_cross_entropy(pred_probs: &Matrix, target_probs: &Matrix) -> Result<f64> {
    if pred_probs.shape() != target_probs.shape() {
        return Err(Error::shape(
            "soft_cross_entropy",
            format!("{:?} vs {:?}", pred_probs.shape(), target_probs.shape()),
        ));
    }
    if pred_probs.rows() == 0 {
        return Err(Error::invalid("soft_cross_entropy on an empty batch"));
    }
    let total: f64 = pred_probs
        .data()
        .iter()
        .zip(target_probs.data())
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| -t * p.max(PROB_FLOOR).ln())
        .sum();
    Ok(total / pred_probs.rows() as f64)
}

/// Soft cross-entropy of `softmax(logits)` and its gradient w.r.t. the
/// logits, `(softmax − t) / n`. Target rows must sum to one.
pub fn softmax_cross_entropy(logits: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    let probs = softmax(logits);
    let loss = soft_cross_entropy(&probs, targets)?;
    let n = logits.rows() as f64;
    let grad = probs.zip_map(targets, |p, t| (p - t) / n)?;
    Ok((loss, grad))
}

pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Per-row Shannon entropy; `0 · ln 0` counts as 0.
pub fn shannon_entropy(probs: &Matrix) -> Vec<f64> {
    probs.row_iter().map(entropy).collect()
}

/// Mean over all entries of `(pred − target)²` and its gradient.
pub fn mse(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "mse",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    let count = pred.data().len();
    if count == 0 {
        return Err(Error::invalid("mse on an empty batch"));
    }
    let diff = pred.sub(target)?;
    let loss = diff.data().iter().map(|d| d * d).sum::<f64>() / count as f64;
    Ok((loss, diff.scale(2.0 / count as f64)))
}
