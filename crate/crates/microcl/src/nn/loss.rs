//! Softmax cross-entropy, the only training loss in the crate.
//!
//! The loss is averaged over the mini-batch, so duplicating every pattern
//! leaves both the loss and the parameter gradients unchanged. Logits are
//! shifted by their row maximum before exponentiation for stability.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
///
/// `logits` has shape `[n, classes]`; `labels[i]` must be `< classes`.
/// Returns `(loss, dloss/dlogits)` where the gradient row `i` is
/// `(softmax(logits_i) - onehot(labels_i)) / n`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let n = logits.batch();
    let classes = logits.item_len();
    if n == 0 || classes == 0 {
        return Err(Error::ShapeMismatch {
            layer: "loss".into(),
            expected: "non-empty [n, classes] logits".into(),
            got: format!("{:?}", logits.shape()),
        });
    }
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            layer: "loss".into(),
            expected: format!("{n} labels"),
            got: format!("{}", labels.len()),
        });
    }
    let mut grad = Tensor::zeros(&[n, classes]);
    let mut total = 0.0;
    for i in 0..n {
        let y = labels[i];
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        let row = logits.item(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &v in row {
            sum += (v - m).exp();
        }
        let log_sum = m + sum.ln();
        total += log_sum - row[y];
        let grow = grad.item_mut(i);
        for j in 0..classes {
            let p = (row[j] - m).exp() / sum;
            grow[j] = (p - if j == y { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    let loss = total / n as f64;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {loss}")));
    }
    Ok((loss, grad))
}

/// Row-wise argmax with ties resolved to the lowest index.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.batch()).map(|i| argmax(t.item(i))).collect()
}

/// Argmax of a slice, ties to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}
