//! Conjugate Gaussian algebra for one individual's latent traits.
//!
//! Given the latent prior and the log-time observations, the speed trait can
//! be integrated out exactly. What remains for the accuracy trait is a
//! Gaussian factor times the probit-binomial count likelihood, and the speed
//! trait given the accuracy trait is Gaussian.

use super::data::Individual;
use super::params::{ItemParams, PopulationParams};
use crate::kernels::normal::LN_SQRT_2PI;
use crate::kernels::{inv_mills, log_normal_cdf};

/// The log-time likelihood of one individual, viewed as a function of the
/// speed trait: `exp(log_scale) · N(τ; center, 1/precision)`.
///
/// Each item contributes `α φ(α(τ − r))` with `r = β − t`. An item with
/// infinite `α` pins τ exactly, in which case `precision` is infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeEvidence {
    pub precision: f64,
    pub center: f64,
    pub log_scale: f64,
}

impl TimeEvidence {
    pub fn from_record(record: &Individual, items: &[ItemParams]) -> Self {
        let mut pinned = Vec::new();
        let mut precision = 0.0;
        let mut weighted = 0.0;
        for r in &record.responses {
            let item = &items[r.item];
            let implied = item.beta - r.log_time;
            if item.alpha_is_infinite() {
                pinned.push(implied);
            } else {
                let w = item.alpha * item.alpha;
                precision += w;
                weighted += w * implied;
            }
        }

        if !pinned.is_empty() {
            let center = pinned.iter().sum::<f64>() / pinned.len() as f64;
            if pinned.iter().any(|p| (p - center).abs() > 1e-9) {
                return Self { precision: f64::INFINITY, center, log_scale: f64::NEG_INFINITY };
            }
            let log_scale = record
                .responses
                .iter()
                .filter(|r| !items[r.item].alpha_is_infinite())
                .map(|r| {
                    let item = &items[r.item];
                    let z = item.alpha * (center - (item.beta - r.log_time));
                    item.alpha.ln() - LN_SQRT_2PI - 0.5 * z * z
                })
                .sum();
            return Self { precision: f64::INFINITY, center, log_scale };
        }

        if precision == 0.0 {
            return Self { precision: 0.0, center: 0.0, log_scale: 0.0 };
        }

        let center = weighted / precision;
        let mut log_scale = 0.5 * ((2.0 * std::f64::consts::PI) / precision).ln();
        for r in &record.responses {
            let item = &items[r.item];
            let dev = item.beta - r.log_time - center;
            log_scale += item.alpha.ln() - LN_SQRT_2PI - 0.5 * item.alpha * item.alpha * dev * dev;
        }
        Self { precision, center, log_scale }
    }

    pub fn is_uninformative(&self) -> bool {
        self.precision == 0.0
    }

    /// `1/precision`, zero when τ is pinned.
    pub fn noise_var(&self) -> f64 {
        if self.precision.is_infinite() {
            0.0
        } else {
            1.0 / self.precision
        }
    }
}

/// Gaussian factor of the accuracy trait after integrating out the speed
/// trait: the prior `N(0,1)` updated by the log-time evidence through the
/// latent correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaFactor {
    pub mean: f64,
    pub var: f64,
    /// Log marginal density of the time evidence centre, `ln N(center; 0, σ_τ² + 1/P)`.
    pub log_evidence: f64,
}

pub fn theta_factor(evidence: &TimeEvidence, pop: &PopulationParams) -> ThetaFactor {
    if evidence.is_uninformative() {
        return ThetaFactor { mean: 0.0, var: 1.0, log_evidence: 0.0 };
    }
    let total = pop.sigma2_tau + evidence.noise_var();
    let c = pop.sigma_theta_tau;
    let m = evidence.center;
    ThetaFactor {
        mean: c * m / total,
        var: 1.0 - c * c / total,
        log_evidence: -LN_SQRT_2PI - 0.5 * total.ln() - 0.5 * m * m / total,
    }
}

/// Mean and variance of `τ | θ, log-times`.
pub fn tau_given_theta(theta: f64, evidence: &TimeEvidence, pop: &PopulationParams) -> (f64, f64) {
    if evidence.precision.is_infinite() {
        return (evidence.center, 0.0);
    }
    let v = pop.residual_var();
    let precision = 1.0 / v + evidence.precision;
    let mean = (pop.sigma_theta_tau * theta / v + evidence.precision * evidence.center) / precision;
    (mean, 1.0 / precision)
}

/// `ln C(n, y)`.
pub fn log_binom_coef(n: u32, y: u32) -> f64 {
    let n = f64::from(n);
    let y = f64::from(y);
    libm::lgamma(n + 1.0) - libm::lgamma(y + 1.0) - libm::lgamma(n - y + 1.0)
}

/// Probit-binomial count log-likelihood without binomial coefficients:
/// `Σ y ln Φ(a(θ−b)) + (N−y) ln(1 − Φ(a(θ−b)))`.
pub fn count_log_kernel(theta: f64, record: &Individual, items: &[ItemParams]) -> f64 {
    record
        .responses
        .iter()
        .map(|r| {
            let item = &items[r.item];
            let eta = item.a * (theta - item.b);
            let y = f64::from(r.count);
            let miss = f64::from(item.n_words - r.count);
            let mut acc = 0.0;
            if r.count > 0 {
                acc += y * log_normal_cdf(eta);
            }
            if miss > 0.0 {
                acc += miss * log_normal_cdf(-eta);
            }
            acc
        })
        .sum()
}

/// Value, first and second derivative of [`count_log_kernel`] in θ.
pub fn count_log_kernel_derivs(theta: f64, record: &Individual, items: &[ItemParams]) -> (f64, f64, f64) {
    let mut f = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for r in &record.responses {
        let item = &items[r.item];
        let a = item.a;
        let eta = a * (theta - item.b);
        let y = f64::from(r.count);
        let miss = f64::from(item.n_words - r.count);
        if r.count > 0 {
            let lam = inv_mills(eta);
            f += y * log_normal_cdf(eta);
            d1 += y * a * lam;
            d2 -= y * a * a * lam * (eta + lam);
        }
        if miss > 0.0 {
            let lam = inv_mills(-eta);
            f += miss * log_normal_cdf(-eta);
            d1 -= miss * a * lam;
            d2 -= miss * a * a * lam * (lam - eta);
        }
    }
    (f, d1, d2)
}

/// Upper bound on [`count_log_kernel`] obtained by maximizing each factor at
/// its own success rate `y/N`.
pub fn count_log_kernel_bound(record: &Individual, items: &[ItemParams]) -> f64 {
    record
        .responses
        .iter()
        .map(|r| {
            let n = f64::from(items[r.item].n_words);
            let y = f64::from(r.count);
            let p = y / n;
            let mut acc = 0.0;
            if y > 0.0 {
                acc += y * p.ln();
            }
            if n - y > 0.0 {
                acc += (n - y) * (1.0 - p).ln();
            }
            acc
        })
        .sum()
}
