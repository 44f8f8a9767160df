//! Scalar loss primitives. Each returns the loss value together with its
//! gradient, so callers can assemble batched objectives without a graph.

/// Huber loss of a residual: quadratic within `delta`, linear outside.
/// Returns `(loss, dloss/dresidual)`.
pub fn huber(residual: f64, delta: f64) -> (f64, f64) {
    let a = residual.abs();
    if a <= delta {
        (0.5 * residual * residual, residual)
    } else {
        (delta * (a - 0.5 * delta), delta * residual.signum())
    }
}

/// Numerically stable binary cross entropy on a logit.
/// Returns `(loss, dloss/dlogit)`.
pub fn bce_with_logits(logit: f64, target: f64) -> (f64, f64) {
    let loss = logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p();
    let grad = sigmoid(logit) - target;
    (loss, grad)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cross entropy between a softmax over `logits` and a target probability
/// vector. Returns `(loss, dloss/dlogits)`; the gradient is `softmax - target`.
pub fn softmax_cross_entropy(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(logits.len(), target.len());
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut exp_sum = 0.0;
    let mut probs: Vec<f64> = logits
        .iter()
        .map(|l| {
            let e = (l - max).exp();
            exp_sum += e;
            e
        })
        .collect();
    let log_sum = exp_sum.ln() + max;
    let mut loss = 0.0;
    for (l, t) in logits.iter().zip(target) {
        if *t != 0.0 {
            loss += t * (log_sum - l);
        }
    }
    for (p, t) in probs.iter_mut().zip(target) {
        *p = *p / exp_sum - t;
    }
    (loss, probs)
}

/// Mean squared error over a row. Returns `(loss, dloss/dpred)`.
pub fn mse_row(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len());
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = p - t;
            loss += e * e;
            2.0 * e / n
        })
        .collect();
    (loss / n, grad)
}
