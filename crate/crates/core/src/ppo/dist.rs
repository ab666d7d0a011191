//! Categorical and tanh-squashed Gaussian distributions with analytic gradients.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// `log p(a)` and its gradient with respect to the logits.
pub fn categorical_log_prob(z: &[f64], a: usize) -> (f64, Vec<f64>) {
    let lp = log_softmax(z);
    let grad = lp
        .iter()
        .enumerate()
        .map(|(i, l)| if i == a { 1.0 } else { 0.0 } - l.exp())
        .collect();
    (lp[a], grad)
}

/// Entropy and its gradient with respect to the logits.
pub fn categorical_entropy(z: &[f64]) -> (f64, Vec<f64>) {
    let lp = log_softmax(z);
    let h: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
    let grad = lp.iter().map(|l| -l.exp() * (l + h)).collect();
    (h, grad)
}

pub fn categorical_sample(z: &[f64], rng: &mut impl Rng) -> usize {
    let lp = log_softmax(z);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, l) in lp.iter().enumerate() {
        acc += l.exp();
        if u < acc {
            return i;
        }
    }
    z.len() - 1
}

pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `log(1 - tanh(u)^2)`, evaluated stably.
pub fn tanh_log_jacobian(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

pub fn clamp_log_std(s: f64) -> f64 {
    s.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

/// Per-dimension result of a squashed-Gaussian log-density evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTerm {
    pub log_prob: f64,
    pub d_mean: f64,
    /// Gradient with respect to the (already clamped) log standard deviation.
    pub d_log_std: f64,
}

/// Log-density of `a = tanh(u)` where `u ~ N(mean, exp(log_std)^2)`, given the pre-squash `u`.
pub fn squashed_gaussian_log_prob(mean: f64, log_std: f64, u: f64) -> GaussianTerm {
    let var = (2.0 * log_std).exp();
    let diff = u - mean;
    let base = -0.5 * diff * diff / var - log_std - 0.5 * (2.0 * PI).ln();
    GaussianTerm {
        log_prob: base - tanh_log_jacobian(u),
        d_mean: diff / var,
        d_log_std: diff * diff / var - 1.0,
    }
}

/// Entropy of the pre-squash Gaussian; its derivative in `log_std` is 1.
pub fn gaussian_entropy(log_std: f64) -> f64 {
    0.5 * (2.0 * PI * std::f64::consts::E).ln() + log_std
}

/// Draws the pre-squash value `u`.
pub fn gaussian_sample(mean: f64, log_std: f64, rng: &mut impl Rng) -> f64 {
    let e: f64 = StandardNormal.sample(rng);
    mean + log_std.exp() * e
}
