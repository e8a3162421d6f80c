//! Softmax cross-entropy over the class axis.

use walshnet_core::Tensor4;

use crate::error::{Result, TrainError};
use crate::real::Real;

/// Mean loss, its gradient with respect to the logits, and the number of
/// correct arg-max predictions.
#[derive(Debug, Clone)]
pub struct LossOutput<S> {
    pub loss: f64,
    pub grad: Tensor4<S>,
    pub correct: usize,
}

/// Index of the largest logit; ties resolve to the lowest index.
pub fn argmax<S: Real>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn softmax_cross_entropy<S: Real>(logits: &Tensor4<S>, labels: &[usize]) -> Result<LossOutput<S>> {
    let d = logits.dims();
    let classes = d.item_len();
    if labels.len() != d.n || d.n == 0 {
        return Err(TrainError::Model(format!("{} labels for a batch of {}", labels.len(), d.n)));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(TrainError::Model(format!("label {bad} out of range for {classes} classes")));
    }
    let mut grad = Tensor4::zeros(d);
    let mut loss = 0.0;
    let mut correct = 0;
    let inv_n = 1.0 / d.n as f64;
    for (b, &label) in labels.iter().enumerate() {
        let row: Vec<f64> = logits.item(b).iter().map(|v| v.to_f64_lossy()).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = max + sum.ln();
        loss += (log_sum - row[label]) * inv_n;
        if argmax(logits.item(b)) == label {
            correct += 1;
        }
        for (k, g) in grad.item_mut(b).iter_mut().enumerate() {
            let p = (row[k] - log_sum).exp();
            let onehot = if k == label { 1.0 } else { 0.0 };
            *g = S::from_f64_lossy((p - onehot) * inv_n);
        }
    }
    Ok(LossOutput { loss, grad, correct })
}
