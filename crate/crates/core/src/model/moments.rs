//! Closed-form conditional and marginal moments of counts and log-times.

use super::params::{ItemParams, PopulationParams};
use crate::kernels::normal::INV_SQRT_2PI;
use crate::kernels::{bvn_cdf, normal_cdf, Correlation};

/// Probability of reading a word correctly, `Φ(a(θ − b))`.
pub fn success_prob(theta: f64, item: &ItemParams) -> f64 {
    normal_cdf(item.a * (theta - item.b))
}

pub fn mean_count(item: &ItemParams) -> f64 {
    f64::from(item.n_words) * normal_cdf(item.marginal_probit())
}

/// Marginal count variance: a between-individual term from the second moment
/// of the success probability plus the within-individual binomial term.
pub fn var_count(item: &ItemParams) -> f64 {
    let n = f64::from(item.n_words);
    let q = item.marginal_probit();
    let p = normal_cdf(q);
    // a²/(1+a²) < 1 for every finite a
    let rho = Correlation::new(item.count_rho()).expect("count correlation inside (-1, 1)");
    let p2 = bvn_cdf(q, q, rho);
    n * n * (p2 - p * p) + n * (p - p2)
}

pub fn mean_logtime(item: &ItemParams) -> f64 {
    item.beta
}

pub fn var_logtime(item: &ItemParams, pop: &PopulationParams) -> f64 {
    pop.sigma2_tau + item.residual_var()
}

/// Covariance of log-times of two distinct items for the same individual.
pub fn cov_logtime_pair(pop: &PopulationParams) -> f64 {
    pop.sigma2_tau
}

pub fn cov_count_logtime(item: &ItemParams, pop: &PopulationParams) -> f64 {
    let a2 = item.a * item.a;
    let scale = f64::from(item.n_words) * INV_SQRT_2PI * (a2 / (a2 + 1.0)).sqrt();
    -pop.sigma_theta_tau * scale * (-0.5 * a2 * item.b * item.b / (a2 + 1.0)).exp()
}

/// Mean of the raw (not log) reading time.
pub fn mean_time(item: &ItemParams, pop: &PopulationParams) -> f64 {
    (item.beta + 0.5 * pop.sigma2_tau + 0.5 * item.residual_var()).exp()
}

/// Variance of the raw reading time.
pub fn var_time(item: &ItemParams, pop: &PopulationParams) -> f64 {
    let m = mean_time(item, pop);
    ((pop.sigma2_tau + item.residual_var()).exp() - 1.0) * m * m
}
