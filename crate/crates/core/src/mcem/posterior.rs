//! Posterior samplers for one individual's latent traits.
//!
//! θ is drawn by rejection from the Gaussian factor left after integrating τ
//! out, with the probit-binomial product as acceptance weight; τ is then
//! drawn from its exact Gaussian conditional.

use crate::error::{OrfError, Result};
use crate::kernels::normal::LN_SQRT_2PI;
use crate::kernels::StreamRng;
use crate::model::conditional::{
    count_log_kernel, count_log_kernel_bound, tau_given_theta, theta_factor, TimeEvidence,
};
use crate::model::{Individual, ItemParams, PopulationParams};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const GRID_POINTS: usize = 2001;
const GRID_HALF_WIDTH: f64 = 8.0;
const GOLDEN_TOL: f64 = 1e-10;

/// Unnormalized log posterior of θ given all of the individual's data.
pub fn theta_posterior_logkernel(
    theta: f64,
    record: &Individual,
    items: &[ItemParams],
    pop: &PopulationParams,
) -> f64 {
    let factor = theta_factor(&TimeEvidence::from_record(record, items), pop);
    let dev = theta - factor.mean;
    count_log_kernel(theta, record, items) - LN_SQRT_2PI - 0.5 * factor.var.ln() - 0.5 * dev * dev / factor.var
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorEnvelope {
    pub mu_g: f64,
    pub sigma2_g: f64,
    /// Log of the supremum of the probit-binomial product.
    pub log_gamma_inv: f64,
}

impl PosteriorEnvelope {
    /// Log acceptance ratio of a proposed θ; never positive for a valid envelope.
    pub fn log_accept_ratio(&self, theta: f64, record: &Individual, items: &[ItemParams]) -> f64 {
        count_log_kernel(theta, record, items) - self.log_gamma_inv
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > GOLDEN_TOL {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

pub fn build_envelope(record: &Individual, items: &[ItemParams], pop: &PopulationParams) -> PosteriorEnvelope {
    let evidence = TimeEvidence::from_record(record, items);
    build_envelope_from(record, items, pop, &evidence)
}

pub(crate) fn build_envelope_from(
    record: &Individual,
    items: &[ItemParams],
    pop: &PopulationParams,
    evidence: &TimeEvidence,
) -> PosteriorEnvelope {
    let factor = theta_factor(evidence, pop);
    let (mu_g, sigma2_g) = (factor.mean, factor.var);
    if record.responses.is_empty() {
        return PosteriorEnvelope { mu_g, sigma2_g, log_gamma_inv: 0.0 };
    }

    let sd = sigma2_g.sqrt();
    let lo = mu_g - GRID_HALF_WIDTH * sd;
    let step = 2.0 * GRID_HALF_WIDTH * sd / (GRID_POINTS - 1) as f64;
    let kernel = |theta: f64| count_log_kernel(theta, record, items);
    let (mut best_k, mut best) = (0, f64::NEG_INFINITY);
    for k in 0..GRID_POINTS {
        let v = kernel(lo + k as f64 * step);
        if v > best {
            best = v;
            best_k = k;
        }
    }

    // The kernel is log-concave, so an interior grid maximum brackets the
    // global one; at an edge the supremum may lie outside the interval.
    let log_gamma_inv = if best_k == 0 || best_k == GRID_POINTS - 1 {
        count_log_kernel_bound(record, items).max(best)
    } else {
        let left = lo + (best_k - 1) as f64 * step;
        let (_, refined) = golden_max(kernel, left, left + 2.0 * step);
        refined.max(best)
    };
    PosteriorEnvelope { mu_g, sigma2_g, log_gamma_inv }
}

/// One rejection-sampled θ draw.
pub fn sample_theta(
    record: &Individual,
    envelope: &PosteriorEnvelope,
    items: &[ItemParams],
    rng: &mut StreamRng,
    max_attempts: u64,
) -> Result<f64> {
    let sd = envelope.sigma2_g.sqrt();
    for _ in 0..max_attempts {
        let z: f64 = StandardNormal.sample(rng);
        let proposal = envelope.mu_g + sd * z;
        let u: f64 = rng.random();
        if u.ln() <= envelope.log_accept_ratio(proposal, record, items) {
            return Ok(proposal);
        }
    }
    Err(OrfError::RejectionOverflow { attempts: max_attempts })
}

pub(crate) fn draw_tau(theta: f64, evidence: &TimeEvidence, pop: &PopulationParams, rng: &mut StreamRng) -> f64 {
    let (mean, var) = tau_given_theta(theta, evidence, pop);
    if var == 0.0 {
        return mean;
    }
    let z: f64 = StandardNormal.sample(rng);
    mean + var.sqrt() * z
}

/// One draw from the Gaussian conditional of τ given θ and the log-times.
pub fn sample_tau_given_theta(
    theta: f64,
    record: &Individual,
    items: &[ItemParams],
    pop: &PopulationParams,
    rng: &mut StreamRng,
) -> f64 {
    draw_tau(theta, &TimeEvidence::from_record(record, items), pop, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::RngStream;
    use crate::model::Response;
    use approx::assert_abs_diff_eq;

    fn items() -> Vec<ItemParams> {
        vec![
            ItemParams::new(0.65, -1.5, 6.3, -1.6, 25).unwrap(),
            ItemParams::new(1.3, 0.2, 3.0, -1.0, 10).unwrap(),
        ]
    }

    fn pop() -> PopulationParams {
        PopulationParams::new(0.0584, -0.181).unwrap()
    }

    #[test]
    fn empty_record_accepts_everything() {
        let rec = Individual::new("e", vec![]);
        let env = build_envelope(&rec, &items(), &pop());
        assert_eq!((env.mu_g, env.sigma2_g, env.log_gamma_inv), (0.0, 1.0, 0.0));
        let mut rng = RngStream::from_seed(3).rng();
        // a single attempt always succeeds
        for _ in 0..100 {
            sample_theta(&rec, &env, &items(), &mut rng, 1).unwrap();
        }
    }

    #[test]
    fn half_correct_single_item() {
        let its = vec![ItemParams::new(1.1, 0.4, 5.0, 0.0, 20).unwrap()];
        let rec = Individual::new("h", vec![Response { item: 0, count: 10, log_time: 0.1 }]);
        let env = build_envelope(&rec, &its, &pop());
        assert_abs_diff_eq!(env.log_gamma_inv, 10.0 * 0.25f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn all_wrong_uses_edge_bound() {
        let rec = Individual::new(
            "z",
            vec![Response { item: 0, count: 0, log_time: -1.6 }, Response { item: 1, count: 0, log_time: -1.0 }],
        );
        let its = items();
        let env = build_envelope(&rec, &its, &pop());
        let sd = env.sigma2_g.sqrt();
        for k in 0..=2000 {
            let theta = env.mu_g - 8.0 * sd + f64::from(k) * 16.0 * sd / 2000.0;
            assert!(env.log_accept_ratio(theta, &rec, &its) <= 1e-9);
        }
    }

    #[test]
    fn envelope_dominates_dense_grid() {
        let rec = Individual::new(
            "d",
            vec![Response { item: 0, count: 22, log_time: -1.7 }, Response { item: 1, count: 3, log_time: -0.8 }],
        );
        let its = items();
        let env = build_envelope(&rec, &its, &pop());
        let mut best = f64::NEG_INFINITY;
        for k in 0..100_000 {
            best = best.max(count_log_kernel(-10.0 + 20.0 * f64::from(k) / 99_999.0, &rec, &its));
        }
        assert!(best <= env.log_gamma_inv + 1e-8);
        assert!(best >= env.log_gamma_inv - 1e-6);
    }

    #[test]
    fn same_stream_same_draw() {
        let rec = Individual::new("d", vec![Response { item: 0, count: 22, log_time: -1.7 }]);
        let its = items();
        let env = build_envelope(&rec, &its, &pop());
        let s = RngStream::new(9, 4);
        let a = sample_theta(&rec, &env, &its, &mut s.rng(), 1_000_000).unwrap();
        let b = sample_theta(&rec, &env, &its, &mut s.rng(), 1_000_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overflow_is_reported() {
        let rec = Individual::new("d", vec![Response { item: 0, count: 25, log_time: -1.7 }]);
        let its = items();
        let mut env = build_envelope(&rec, &its, &pop());
        env.log_gamma_inv += 1e6;
        let err = sample_theta(&rec, &env, &its, &mut RngStream::from_seed(1).rng(), 50).unwrap_err();
        assert!(matches!(err, OrfError::RejectionOverflow { attempts: 50 }));
    }

    #[test]
    fn tau_prior_conditional_without_items() {
        let rec = Individual::new("e", vec![]);
        let mut rng = RngStream::from_seed(8).rng();
        let p = pop();
        let draws: Vec<f64> = (0..200_000).map(|_| sample_tau_given_theta(1.0, &rec, &items(), &p, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        let se = (p.residual_var() / draws.len() as f64).sqrt();
        assert!((mean - p.sigma_theta_tau).abs() < 4.0 * se);
        assert!((var / p.residual_var() - 1.0).abs() < 0.02);
    }
}
