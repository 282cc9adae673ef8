//! Complete-data and observed-data log-likelihoods.

use super::conditional::{
    count_log_kernel, count_log_kernel_derivs, log_binom_coef, theta_factor, TimeEvidence,
};
use super::data::{Dataset, Individual};
use super::params::{ItemParams, LatentPair, PopulationParams};
use crate::error::{OrfError, Result};
use crate::kernels::normal::LN_SQRT_2PI;
use crate::kernels::GaussHermite;

pub(crate) fn check_items(data: &Dataset, items: &[ItemParams]) -> Result<()> {
    if data.n_items() != items.len() {
        return Err(OrfError::InvalidParameter(format!(
            "dataset has {} items but {} parameter sets were given",
            data.n_items(),
            items.len()
        )));
    }
    for (spec, item) in data.items().iter().zip(items) {
        item.validate()?;
        if spec.n_words != item.n_words {
            return Err(OrfError::InvalidParameter(format!(
                "item {} has {} words in the data but {} in the parameters",
                spec.id, spec.n_words, item.n_words
            )));
        }
    }
    Ok(())
}

/// `ln[α φ(α(t − β + τ))]`. With infinite α the density is a point mass, so
/// the value is `+∞` on the support and `−∞` off it.
pub fn log_time_density(log_time: f64, tau: f64, item: &ItemParams) -> f64 {
    let resid = log_time - item.beta + tau;
    if item.alpha_is_infinite() {
        return if resid == 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    let z = item.alpha * resid;
    item.alpha.ln() - LN_SQRT_2PI - 0.5 * z * z
}

/// Bivariate normal log-density of the latent pair.
pub fn latent_log_density(latent: LatentPair, pop: &PopulationParams) -> f64 {
    let v = pop.residual_var();
    let LatentPair { theta, tau } = latent;
    let quad = pop.sigma2_tau * theta * theta - 2.0 * pop.sigma_theta_tau * theta * tau + tau * tau;
    -2.0 * LN_SQRT_2PI - 0.5 * v.ln() - 0.5 * quad / v
}

/// Complete-data log-likelihood contribution of one individual.
pub fn complete_loglik_individual(
    record: &Individual,
    latent: LatentPair,
    items: &[ItemParams],
    pop: &PopulationParams,
) -> f64 {
    let mut total = latent_log_density(latent, pop) + count_log_kernel(latent.theta, record, items);
    for r in &record.responses {
        let item = &items[r.item];
        total += log_binom_coef(item.n_words, r.count) + log_time_density(r.log_time, latent.tau, item);
    }
    total
}

pub fn complete_loglik(
    data: &Dataset,
    latents: &[LatentPair],
    items: &[ItemParams],
    pop: &PopulationParams,
) -> Result<f64> {
    check_items(data, items)?;
    pop.validate()?;
    if latents.len() != data.n_individuals() {
        return Err(OrfError::InvalidParameter(format!(
            "expected {} latent pairs, got {}",
            data.n_individuals(),
            latents.len()
        )));
    }
    Ok(data
        .individuals()
        .iter()
        .zip(latents)
        .map(|(rec, &lat)| complete_loglik_individual(rec, lat, items, pop))
        .sum())
}

/// Mode of the concave function `count kernel + ln N(θ; mean, var)` and the
/// curvature there, via safeguarded Newton iterations.
pub(crate) fn theta_mode(record: &Individual, items: &[ItemParams], mean: f64, var: f64) -> (f64, f64) {
    let objective = |theta: f64| {
        let (f, d1, d2) = count_log_kernel_derivs(theta, record, items);
        let dev = theta - mean;
        (f - 0.5 * dev * dev / var, d1 - dev / var, d2 - 1.0 / var)
    };
    let mut theta = mean;
    let (mut f, mut g, mut h) = objective(theta);
    for _ in 0..200 {
        let step = -g / h;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = theta + t * step;
            let (fc, gc, hc) = objective(cand);
            if fc >= f - 1e-12 * f.abs().max(1.0) {
                theta = cand;
                f = fc;
                g = gc;
                h = hc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || (t * step).abs() < 1e-13 * theta.abs().max(1.0) {
            break;
        }
    }
    (theta, -h)
}

/// Observed-data log-likelihood of one individual.
///
/// The speed trait is integrated in closed form; the accuracy trait by
/// Gauss–Hermite quadrature centred at the integrand's mode and scaled by its
/// curvature.
pub fn observed_loglik_individual(
    record: &Individual,
    items: &[ItemParams],
    pop: &PopulationParams,
    rule: &GaussHermite,
) -> f64 {
    if record.responses.is_empty() {
        return 0.0;
    }
    let evidence = TimeEvidence::from_record(record, items);
    if evidence.log_scale == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let factor = theta_factor(&evidence, pop);
    let constants: f64 = record
        .responses
        .iter()
        .map(|r| log_binom_coef(items[r.item].n_words, r.count))
        .sum::<f64>()
        + evidence.log_scale
        + factor.log_evidence;

    let (mode, curvature) = theta_mode(record, items, factor.mean, factor.var);
    let scale = std::f64::consts::SQRT_2 / curvature.sqrt();
    let log_norm = -LN_SQRT_2PI - 0.5 * factor.var.ln();
    let terms: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| {
            let theta = mode + scale * x;
            let dev = theta - factor.mean;
            w.ln() + x * x + count_log_kernel(theta, record, items) + log_norm - 0.5 * dev * dev / factor.var
        })
        .collect();
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_integral = peak + terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln() + scale.ln();
    constants + log_integral
}

pub fn observed_loglik(
    data: &Dataset,
    items: &[ItemParams],
    pop: &PopulationParams,
    quad_order: usize,
) -> Result<f64> {
    if quad_order < 10 {
        return Err(OrfError::InvalidParameter(format!(
            "quadrature order must be at least 10, got {quad_order}"
        )));
    }
    check_items(data, items)?;
    pop.validate()?;
    let rule = GaussHermite::new(quad_order)?;
    Ok(data
        .individuals()
        .iter()
        .map(|rec| observed_loglik_individual(rec, items, pop, &rule))
        .sum())
}
