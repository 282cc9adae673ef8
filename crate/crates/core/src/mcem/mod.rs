//! Monte Carlo EM maximum-likelihood estimation.

pub mod estep;
pub mod mstep;
pub mod posterior;

pub use estep::{draw_individual, e_step, LatentDraws};
pub use mstep::{m_step_accuracy, m_step_covariance, m_step_speed, q_diff_se, q_hat, AccuracyStep};
pub use posterior::{
    build_envelope, sample_tau_given_theta, sample_theta, theta_posterior_logkernel, PosteriorEnvelope,
};

use crate::error::{OrfError, Result};
use crate::fit::{FitResult, Method, TraceRow};
use crate::kernels::RngStream;
use crate::model::{observed_loglik, Dataset, ItemParams, PopulationParams};
use crate::mom::compute_moments;

/// Gauss–Hermite order used to monitor the observed log-likelihood.
pub const MONITOR_QUAD_ORDER: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct McemConfig {
    /// Stages of `(iterations, draws per individual)`.
    pub schedule: Vec<(usize, usize)>,
    pub rel_tol: f64,
    pub seed: RngStream,
    pub max_rejection_attempts: u64,
}

impl Default for McemConfig {
    fn default() -> Self {
        Self {
            schedule: vec![(10, 20), (3, 200)],
            rel_tol: 1e-3,
            seed: RngStream::from_seed(0),
            max_rejection_attempts: 1_000_000,
        }
    }
}

impl McemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() || self.schedule.iter().any(|&(k, m)| k == 0 || m == 0) {
            return Err(OrfError::InvalidParameter(
                "schedule stages need at least one iteration and one draw".into(),
            ));
        }
        if !(self.rel_tol > 0.0) {
            return Err(OrfError::InvalidParameter(format!("rel_tol must be positive, got {}", self.rel_tol)));
        }
        if self.max_rejection_attempts == 0 {
            return Err(OrfError::InvalidParameter("max_rejection_attempts must be positive".into()));
        }
        Ok(())
    }

    pub fn total_iterations(&self) -> usize {
        self.schedule.iter().map(|s| s.0).sum()
    }
}

/// Parses `"10x20,3x200"` into stages of `(iterations, draws)`.
pub fn parse_schedule(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|stage| {
            let (k, m) = stage
                .trim()
                .split_once('x')
                .ok_or_else(|| OrfError::InvalidParameter(format!("bad schedule stage {stage:?}; expected KxM")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| OrfError::InvalidParameter(format!("bad schedule stage {stage:?}; expected KxM")))
            };
            Ok((parse(k)?, parse(m)?))
        })
        .collect()
}

fn max_rel_change(old: (&[ItemParams], &PopulationParams), new: (&[ItemParams], &PopulationParams)) -> f64 {
    let rel = |a: f64, b: f64| {
        if a == b {
            0.0
        } else {
            (b - a).abs() / a.abs().max(1e-6)
        }
    };
    let mut worst = rel(old.1.sigma2_tau, new.1.sigma2_tau).max(rel(old.1.sigma_theta_tau, new.1.sigma_theta_tau));
    for (x, y) in old.0.iter().zip(new.0) {
        worst = worst.max(rel(x.a, y.a)).max(rel(x.b, y.b)).max(rel(x.beta, y.beta));
        if x.alpha.is_finite() && y.alpha.is_finite() {
            worst = worst.max(rel(x.alpha, y.alpha));
        } else if x.alpha != y.alpha {
            worst = f64::INFINITY;
        }
    }
    worst
}

/// Replaces infinite α in a starting value, which would pin every τ draw
/// and leave the speed update stuck, by `1/√(0.1·s²_t)`.
fn usable_start(data: &Dataset, init: &FitResult, flags: &mut Vec<String>) -> Result<Vec<ItemParams>> {
    let mut items = init.items.clone();
    if items.iter().all(|i| i.alpha.is_finite()) {
        return Ok(items);
    }
    let moments = compute_moments(data)?;
    for (k, item) in items.iter_mut().enumerate() {
        if item.alpha.is_infinite() {
            let s2 = moments.items[k].s2_t;
            if !(s2 > 0.0) {
                return Err(OrfError::Degenerate(format!(
                    "item {} has constant log-times; alpha cannot be started",
                    data.items()[k].id
                )));
            }
            item.alpha = 1.0 / (0.1 * s2).sqrt();
            flags.push(format!("item {}: infinite starting alpha replaced", data.items()[k].id));
        }
    }
    Ok(items)
}

/// Runs the full staged schedule from `init` and returns the last iterate.
///
/// Every iteration draws fresh latent pairs, updates all parameters and
/// records a trace row. `converged` reports whether the last iteration moved
/// every parameter by less than `rel_tol` relatively.
pub fn fit_mcem(data: &Dataset, init: &FitResult, cfg: &McemConfig) -> Result<FitResult> {
    cfg.validate()?;
    init.validate()?;
    let mut flags = Vec::new();
    let mut items = usable_start(data, init, &mut flags)?;
    let mut pop = init.pop;
    crate::model::likelihood::check_items(data, &items)?;

    let mut trace = Vec::with_capacity(cfg.total_iterations());
    let mut prev_loglik = observed_loglik(data, &items, &pop, MONITOR_QUAD_ORDER)?;
    let mut converged = false;
    let mut iteration = 0;
    for (stage, &(iters, m)) in cfg.schedule.iter().enumerate() {
        let final_stage = stage + 1 == cfg.schedule.len();
        for _ in 0..iters {
            iteration += 1;
            let draws = e_step(data, &items, &pop, m, cfg.seed.child(iteration as u64), cfg.max_rejection_attempts)?;
            let q_before = q_hat(&draws, data, &items, &pop)?;

            let speed = m_step_speed(&draws, data)?;
            let accuracy = m_step_accuracy(&draws, data)?;
            let new_pop = m_step_covariance(&draws)?;
            let mut new_items = Vec::with_capacity(items.len());
            for (k, ((&(alpha, beta), acc), old)) in speed.iter().zip(&accuracy).zip(&items).enumerate() {
                if acc.at_boundary {
                    flags.push(format!("iteration {iteration}: item {} accuracy update on the box boundary", data.items()[k].id));
                }
                if alpha.is_infinite() {
                    flags.push(format!("iteration {iteration}: item {} infinite alpha", data.items()[k].id));
                }
                new_items.push(ItemParams::new(acc.a, acc.b, alpha, beta, old.n_words)?);
            }

            let q_after = q_hat(&draws, data, &new_items, &new_pop)?;
            let ascent_se = q_diff_se(&draws, data, (&items, &pop), (&new_items, &new_pop))?;
            let loglik = observed_loglik(data, &new_items, &new_pop, MONITOR_QUAD_ORDER)?;
            if loglik < prev_loglik - 3.0 * ascent_se {
                flags.push(format!(
                    "iteration {iteration}: observed log-likelihood fell from {prev_loglik} to {loglik}"
                ));
            }
            let change = max_rel_change((&items, &pop), (&new_items, &new_pop));
            converged = final_stage && change < cfg.rel_tol;

            trace.push(TraceRow {
                iteration,
                draws: m,
                items: new_items.clone(),
                pop: new_pop,
                observed_loglik: loglik,
                q_before,
                q_after,
                ascent_se,
            });
            items = new_items;
            pop = new_pop;
            prev_loglik = loglik;
        }
    }

    Ok(FitResult {
        method: Method::Mcem,
        item_ids: data.items().iter().map(|i| i.id.clone()).collect(),
        items,
        pop,
        diagnostics: crate::fit::Diagnostics { flags, trace, observed_loglik: Some(prev_loglik), converged },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mom::fit_mom;
    use crate::simulate::{simulate_dataset, table1_scenario, SimConfig};

    fn data(n: usize, seed: u64) -> Dataset {
        let (items, pop) = table1_scenario(2).unwrap();
        simulate_dataset(&SimConfig { items, pop, n, missing_rate: 0.1, seed: RngStream::from_seed(seed) })
            .unwrap()
            .dataset
    }

    #[test]
    fn schedule_parsing() {
        assert_eq!(parse_schedule("10x20,3x200").unwrap(), vec![(10, 20), (3, 200)]);
        assert_eq!(parse_schedule(" 2x5 ").unwrap(), vec![(2, 5)]);
        assert!(parse_schedule("10-20").is_err());
        assert!(parse_schedule("ax2").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(McemConfig::default().validate().is_ok());
        assert_eq!(McemConfig::default().total_iterations(), 13);
        assert!(McemConfig { schedule: vec![(1, 0)], ..McemConfig::default() }.validate().is_err());
        assert!(McemConfig { rel_tol: 0.0, ..McemConfig::default() }.validate().is_err());
    }

    #[test]
    fn short_run_trace_and_ascent() {
        let d = data(60, 4);
        let init = fit_mom(&d).unwrap();
        let cfg = McemConfig { schedule: vec![(2, 5), (1, 20)], seed: RngStream::from_seed(9), ..McemConfig::default() };
        let fit = fit_mcem(&d, &init, &cfg).unwrap();
        assert_eq!(fit.diagnostics.trace.len(), 3);
        for row in &fit.diagnostics.trace {
            assert!(row.q_after >= row.q_before);
            assert!(row.observed_loglik.is_finite());
        }
        assert_eq!(fit.diagnostics.trace.iter().map(|r| r.draws).collect::<Vec<_>>(), vec![5, 5, 20]);
        let again = fit_mcem(&d, &init, &cfg).unwrap();
        assert_eq!(fit, again);
    }

    #[test]
    fn infinite_alpha_start_is_replaced() {
        let d = data(60, 4);
        let mut init = fit_mom(&d).unwrap();
        init.items[1].alpha = f64::INFINITY;
        let cfg = McemConfig { schedule: vec![(1, 5)], ..McemConfig::default() };
        let fit = fit_mcem(&d, &init, &cfg).unwrap();
        assert!(fit.items[1].alpha.is_finite());
        assert!(fit.diagnostics.flags.iter().any(|f| f.contains("starting alpha")));
    }
}
