//! Scalar losses, their derivatives with respect to scores, and the sign
//! gradient estimators.

use std::f64::consts::PI;

use super::config::Estimator;

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid without overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `−ln σ(pos − neg)` and its derivatives with respect to both scores.
pub fn bpr_loss_and_score_grads(pos: f64, neg: f64) -> (f64, f64, f64) {
    let margin = pos - neg;
    let g = sigmoid(-margin);
    (softplus(-margin), -g, g)
}

/// Distillation loss of one user over cached pseudo-positives.
///
/// `segment_scores[l][k]` is the student's layer-`l` score for the `(k+1)`-th
/// cached item; `rank_weights[k]` is `w_{k+1}`. The loss is
/// `−(1/R) Σ_l Σ_k w_k ln σ(ŷ)` with `R = rank_weights.len()`.
pub fn distill_loss_and_score_grads(segment_scores: &[Vec<f64>], rank_weights: &[f64]) -> (f64, Vec<Vec<f64>>) {
    let r = rank_weights.len() as f64;
    let mut loss = 0.0;
    let grads = segment_scores
        .iter()
        .map(|layer| {
            layer
                .iter()
                .zip(rank_weights)
                .map(|(&y, &wk)| {
                    let c = wk / r;
                    loss -= c * log_sigmoid(y);
                    -c * sigmoid(-y)
                })
                .collect()
        })
        .collect();
    (loss, grads)
}

/// Surrogate derivative of `sign` at `v`.
#[inline]
pub fn sign_derivative(v: f64, kind: Estimator, gamma: f64) -> f64 {
    match kind {
        Estimator::DiracGauss => 2.0 * gamma / PI.sqrt() * (-(gamma * v).powi(2)).exp(),
        Estimator::Ste => 1.0,
        Estimator::Tanh => {
            let t = (gamma * v).tanh();
            gamma * (1.0 - t * t)
        }
    }
}

/// `upstream ⊙ g(v)` for the chosen estimator.
pub fn estimate_sign_gradient(v: &[f64], upstream: &[f64], kind: Estimator, gamma: f64) -> Vec<f64> {
    v.iter()
        .zip(upstream)
        .map(|(&x, &g)| g * sign_derivative(x, kind, gamma))
        .collect()
}
