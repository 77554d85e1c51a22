//! Stable scalar helpers shared by the oracle, the learned energy and the
//! samplers.

use std::f64::consts::PI;

/// `log(sum(exp(x)))` with the max subtracted first.
pub fn logsumexp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Softmax weights of `x`, returned alongside `logsumexp(x)`.
pub fn softmax(x: &[f64]) -> (Vec<f64>, f64) {
    let lse = logsumexp(x);
    (x.iter().map(|v| (v - lse).exp()).collect(), lse)
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log N(x; mean, var)` for a scalar Gaussian.
pub fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * (r * r / var + (2.0 * PI * var).ln())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Relative error `|a - b| / max(|a|, |b|, floor)` in the Euclidean norm.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    diff / norm(a).max(norm(b)).max(floor)
}
