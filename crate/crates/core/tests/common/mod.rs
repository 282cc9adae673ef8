//! Independent numerical oracles for integration tests.
//!
//! Everything here works from the model's primitive densities evaluated
//! pointwise on grids; none of the crate's conjugate algebra is reused.

#![allow(dead_code)]

use orfem::kernels::{normal_cdf, normal_pdf};
use orfem::model::{Individual, ItemParams, PopulationParams};

/// Composite Simpson weights for `n` (odd) equally spaced points with spacing `h`.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n % 2 == 1 && n >= 3);
    (0..n)
        .map(|k| {
            let w = if k == 0 || k == n - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn ln_binom(n: u32, y: u32) -> f64 {
    (1..=y).map(|k| (f64::from(n - y + k) / f64::from(k)).ln()).sum()
}

/// Log of the joint density of `(θ, τ)` and one individual's data, built
/// term by term from the primitive densities.
pub fn log_joint(theta: f64, tau: f64, record: &Individual, items: &[ItemParams], pop: &PopulationParams) -> f64 {
    let s = pop.sigma2_tau;
    let c = pop.sigma_theta_tau;
    let det = s - c * c;
    let quad = (s * theta * theta - 2.0 * c * theta * tau + tau * tau) / det;
    let mut lj = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * quad;
    for r in &record.responses {
        let it = &items[r.item];
        let p = normal_cdf(it.a * (theta - it.b));
        let q = normal_cdf(-it.a * (theta - it.b));
        lj += ln_binom(it.n_words, r.count) + f64::from(r.count) * p.ln() + f64::from(it.n_words - r.count) * q.ln();
        lj += (it.alpha * normal_pdf(it.alpha * (r.log_time - it.beta + tau))).ln();
    }
    lj
}

/// The posterior evaluated on a tensor grid.
pub struct GridPosterior {
    pub theta: Vec<f64>,
    pub tau: Vec<f64>,
    /// log joint at `[i][k]` for `theta[i]`, `tau[k]`.
    pub log_joint: Vec<Vec<f64>>,
    pub w_theta: Vec<f64>,
    pub w_tau: Vec<f64>,
}

impl GridPosterior {
    pub fn new(
        record: &Individual,
        items: &[ItemParams],
        pop: &PopulationParams,
        theta_range: (f64, f64, usize),
        tau_range: (f64, f64, usize),
    ) -> Self {
        let theta = linspace(theta_range.0, theta_range.1, theta_range.2);
        let tau = linspace(tau_range.0, tau_range.1, tau_range.2);
        let log_joint = theta
            .iter()
            .map(|&th| tau.iter().map(|&tu| log_joint(th, tu, record, items, pop)).collect())
            .collect();
        let w_theta = simpson_weights(theta.len(), theta[1] - theta[0]);
        let w_tau = simpson_weights(tau.len(), tau[1] - tau[0]);
        Self { theta, tau, log_joint, w_theta, w_tau }
    }

    fn peak(&self) -> f64 {
        self.log_joint.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Log of the double integral of the joint density (the marginal likelihood).
    pub fn log_evidence(&self) -> f64 {
        let peak = self.peak();
        let mut total = 0.0;
        for (i, row) in self.log_joint.iter().enumerate() {
            let inner: f64 = row.iter().zip(&self.w_tau).map(|(l, w)| w * (l - peak).exp()).sum();
            total += self.w_theta[i] * inner;
        }
        peak + total.ln()
    }

    /// Normalized θ-marginal density at the θ grid points.
    pub fn theta_marginal(&self) -> Vec<f64> {
        let peak = self.peak();
        let raw: Vec<f64> = self
            .log_joint
            .iter()
            .map(|row| row.iter().zip(&self.w_tau).map(|(l, w)| w * (l - peak).exp()).sum())
            .collect();
        let z: f64 = raw.iter().zip(&self.w_theta).map(|(v, w)| v * w).sum();
        raw.iter().map(|v| v / z).collect()
    }

    /// Posterior means of θ and τ.
    pub fn means(&self) -> (f64, f64) {
        let peak = self.peak();
        let (mut z, mut mt, mut mu) = (0.0, 0.0, 0.0);
        for (i, row) in self.log_joint.iter().enumerate() {
            for (k, l) in row.iter().enumerate() {
                let w = self.w_theta[i] * self.w_tau[k] * (l - peak).exp();
                z += w;
                mt += w * self.theta[i];
                mu += w * self.tau[k];
            }
        }
        (mt / z, mu / z)
    }

    /// Posterior standard deviations of θ and τ.
    pub fn sds(&self) -> (f64, f64) {
        let (m1, m2) = self.means();
        let peak = self.peak();
        let (mut z, mut v1, mut v2) = (0.0, 0.0, 0.0);
        for (i, row) in self.log_joint.iter().enumerate() {
            for (k, l) in row.iter().enumerate() {
                let w = self.w_theta[i] * self.w_tau[k] * (l - peak).exp();
                z += w;
                v1 += w * (self.theta[i] - m1).powi(2);
                v2 += w * (self.tau[k] - m2).powi(2);
            }
        }
        ((v1 / z).sqrt(), (v2 / z).sqrt())
    }

    /// Cumulative distribution of the θ marginal at the grid points (trapezoid rule).
    pub fn theta_cdf(&self) -> Vec<f64> {
        let dens = self.theta_marginal();
        let mut cdf = vec![0.0; dens.len()];
        for k in 1..dens.len() {
            cdf[k] = cdf[k - 1] + 0.5 * (dens[k] + dens[k - 1]) * (self.theta[k] - self.theta[k - 1]);
        }
        let total = *cdf.last().unwrap();
        cdf.iter().map(|c| c / total).collect()
    }

    /// Inverse-CDF draw of θ from the grid marginal, by linear interpolation.
    pub fn invert_theta(&self, cdf: &[f64], u: f64) -> f64 {
        let k = cdf.partition_point(|&c| c < u).clamp(1, cdf.len() - 1);
        let (c0, c1) = (cdf[k - 1], cdf[k]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.theta[k - 1] + t * (self.theta[k] - self.theta[k - 1])
    }
}

/// Normalized τ density at fixed θ on a τ grid, from the joint density alone.
pub fn tau_slice(
    theta: f64,
    record: &Individual,
    items: &[ItemParams],
    pop: &PopulationParams,
    tau: &[f64],
) -> Vec<f64> {
    let logs: Vec<f64> = tau.iter().map(|&t| log_joint(theta, t, record, items, pop)).collect();
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = simpson_weights(tau.len(), tau[1] - tau[0]);
    let z: f64 = logs.iter().zip(&w).map(|(l, w)| w * (l - peak).exp()).sum();
    logs.iter().map(|l| (l - peak).exp() / z).collect()
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Maximizer of `f(x, y)` by nested golden-section search, valid when the
/// inner maximum is unimodal in `x` and the profile is unimodal in `y`.
pub fn nested_golden(
    f: impl Fn(f64, f64) -> f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
    tol: f64,
) -> (f64, f64) {
    let inner = |y: f64| golden_max(|x| f(x, y), x_range.0, x_range.1, tol);
    let y = golden_max(|y| f(inner(y), y), y_range.0, y_range.1, tol);
    (inner(y), y)
}

/// One-sample Kolmogorov–Smirnov distance to a CDF.
pub fn ks_one_sample(mut draws: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    draws
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let c = cdf(x);
            (c - k as f64 / n).abs().max(((k + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Mean and standard error of the mean.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Mean of a product of paired samples and its standard error.
pub fn cov_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let (c, se) = mean_se(&prods);
    (c * n / (n - 1.0), se)
}

/// Variance estimate and its standard error.
pub fn var_se(x: &[f64]) -> (f64, f64) {
    cov_se(x, x)
}
