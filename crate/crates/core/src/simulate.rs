//! Synthetic data generation, including the two reference item
//! configurations used for recovery studies.

use crate::error::{OrfError, Result};
use crate::kernels::{draw_bivariate, RngStream};
use crate::model::{Dataset, Individual, ItemParams, ItemSpec, LatentPair, PopulationParams, Response};
use crate::mom::estimate_accuracy;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

/// Latent speed variance shared by both reference scenarios (time in minutes).
pub const SCENARIO_SIGMA2_TAU: f64 = 0.24155 * 0.24155;
/// Latent covariance giving a trait correlation of −0.75.
pub const SCENARIO_SIGMA_THETA_TAU: f64 = -0.18116;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub items: Vec<ItemParams>,
    pub pop: PopulationParams,
    pub n: usize,
    pub missing_rate: f64,
    pub seed: RngStream,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(OrfError::InvalidParameter("at least one item is required".into()));
        }
        for item in &self.items {
            item.validate()?;
        }
        self.pop.validate()?;
        if self.n == 0 {
            return Err(OrfError::InvalidParameter("sample size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(OrfError::InvalidParameter(format!(
                "missing rate must lie in [0, 1), got {}",
                self.missing_rate
            )));
        }
        Ok(())
    }
}

/// A simulated dataset together with the latent traits that generated it.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: Dataset,
    pub latents: Vec<LatentPair>,
}

pub fn item_ids(count: usize) -> Vec<String> {
    (1..=count).map(|k| format!("i{k}")).collect()
}

pub fn simulate_dataset(cfg: &SimConfig) -> Result<SimulatedData> {
    cfg.validate()?;
    let specs: Vec<ItemSpec> = item_ids(cfg.items.len())
        .into_iter()
        .zip(&cfg.items)
        .map(|(id, item)| ItemSpec { id, n_words: item.n_words })
        .collect();
    let width = cfg.n.to_string().len();
    let cov = cfg.pop.covariance();

    let mut latents = Vec::with_capacity(cfg.n);
    let mut individuals = Vec::with_capacity(cfg.n);
    for j in 0..cfg.n {
        let stream = cfg.seed.child(j as u64);
        let [theta, tau] = draw_bivariate([0.0, 0.0], cov, stream.child(0), 1)?[0];
        let mut rng = stream.child(1).rng();

        let mut observed = vec![true; cfg.items.len()];
        if cfg.missing_rate > 0.0 {
            loop {
                for flag in observed.iter_mut() {
                    *flag = rng.random::<f64>() >= cfg.missing_rate;
                }
                if observed.iter().any(|&o| o) {
                    break;
                }
            }
        }

        let mut responses = Vec::new();
        for (i, item) in cfg.items.iter().enumerate() {
            let p = crate::model::success_prob(theta, item);
            let count = Binomial::new(u64::from(item.n_words), p)
                .map_err(|e| OrfError::InvalidParameter(e.to_string()))?
                .sample(&mut rng) as u32;
            let noise: f64 = StandardNormal.sample(&mut rng);
            // pass through seconds so the stored value is exactly what a
            // written-then-read responses file yields
            let log_time = (item.beta - tau + noise * item.residual_var().sqrt()).exp().ln();
            if observed[i] {
                responses.push(Response { item: i, count, log_time });
            }
        }
        latents.push(LatentPair { theta, tau });
        individuals.push(Individual::new(format!("s{:0width$}", j + 1), responses));
    }
    Ok(SimulatedData { dataset: Dataset::new(specs, individuals)?, latents })
}

/// Count and raw-time moments defining a reference item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemTargets {
    pub n_words: u32,
    pub count_mean: f64,
    pub count_var: f64,
    pub time_mean: f64,
    pub time_var: f64,
}

/// Targets of the two reference scenarios: two 50-word items, or four
/// 25-word items with identical totals.
pub fn scenario_targets(which: u8) -> Result<(usize, ItemTargets)> {
    match which {
        1 => Ok((
            2,
            ItemTargets {
                n_words: 50,
                count_mean: 40.0,
                count_var: 6.2749 * 6.2749,
                time_mean: 0.4086,
                time_var: 0.1205 * 0.1205,
            },
        )),
        2 => Ok((
            4,
            ItemTargets {
                n_words: 25,
                count_mean: 20.0,
                count_var: 4.4371 * 4.4371,
                time_mean: 0.2043,
                time_var: 0.0602 * 0.0602,
            },
        )),
        other => Err(OrfError::InvalidParameter(format!("unknown scenario {other}; expected 1 or 2"))),
    }
}

/// Item parameters reproducing the given count and raw-time moments.
///
/// `(a, b)` come from inverting the count mean and variance equations; the
/// residual variance `1/α²` and `β` follow from the log-normal mean and
/// variance of the raw time.
pub fn invert_item_targets(t: &ItemTargets, sigma2_tau: f64) -> Result<ItemParams> {
    let (a, b) = estimate_accuracy(t.count_mean, t.count_var, t.n_words)?;
    let log_var = (1.0 + t.time_var / (t.time_mean * t.time_mean)).ln();
    let resid = log_var - sigma2_tau;
    if resid <= 0.0 {
        return Err(OrfError::InvalidParameter(
            "time variance too small for the latent speed variance".into(),
        ));
    }
    let alpha = 1.0 / resid.sqrt();
    let beta = t.time_mean.ln() - 0.5 * sigma2_tau - 0.5 * resid;
    ItemParams::new(a, b, alpha, beta, t.n_words)
}

pub fn table1_scenario(which: u8) -> Result<(Vec<ItemParams>, PopulationParams)> {
    let (count, targets) = scenario_targets(which)?;
    let pop = PopulationParams::new(SCENARIO_SIGMA2_TAU, SCENARIO_SIGMA_THETA_TAU)?;
    let item = invert_item_targets(&targets, pop.sigma2_tau)?;
    Ok((vec![item; count], pop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mean_count, mean_time, var_count, var_time};
    use approx::assert_abs_diff_eq;

    #[test]
    fn scenario_shapes() {
        let (items, pop) = table1_scenario(2).unwrap();
        assert_eq!(items.len(), 4);
        assert!(items.iter().all(|i| i.n_words == 25 && *i == items[0]));
        let (items1, _) = table1_scenario(1).unwrap();
        assert_eq!(items1.len(), 2);
        assert!(items1.iter().all(|i| i.n_words == 50));
        assert_abs_diff_eq!(pop.correlation(), -0.75, epsilon = 1e-4);
        assert!(table1_scenario(3).is_err());
    }

    #[test]
    fn scenarios_reproduce_their_targets() {
        for which in [1, 2] {
            let (_, t) = scenario_targets(which).unwrap();
            let (items, pop) = table1_scenario(which).unwrap();
            let it = &items[0];
            assert_abs_diff_eq!(mean_count(it), t.count_mean, epsilon = 1e-6);
            assert_abs_diff_eq!(var_count(it), t.count_var, epsilon = 1e-6);
            assert_abs_diff_eq!(mean_time(it, &pop), t.time_mean, epsilon = 1e-6);
            assert_abs_diff_eq!(var_time(it, &pop), t.time_var, epsilon = 1e-6);
        }
    }

    #[test]
    fn scenario_two_parameters_match_high_precision_inversion() {
        // 40-digit mpmath root-finding on the same moment equations
        let (items, _) = table1_scenario(2).unwrap();
        assert_abs_diff_eq!(items[0].a, 0.654_665_393_096_634, epsilon = 1e-8);
        assert_abs_diff_eq!(items[0].b, -1.536_563_855_304_287, epsilon = 1e-8);
        assert_abs_diff_eq!(items[0].alpha, 6.335_168_431_618_672, epsilon = 1e-9);
        assert_abs_diff_eq!(items[0].beta, -1.629_797_131_765_144, epsilon = 1e-12);
    }

    #[test]
    fn no_missingness_means_full_records() {
        let (items, pop) = table1_scenario(2).unwrap();
        let cfg = SimConfig { items, pop, n: 50, missing_rate: 0.0, seed: RngStream::from_seed(5) };
        let sim = simulate_dataset(&cfg).unwrap();
        assert!(sim.dataset.individuals().iter().all(|p| p.responses.len() == 4));
        assert_eq!(sim.latents.len(), 50);
    }

    #[test]
    fn missingness_keeps_one_item() {
        let (items, pop) = table1_scenario(1).unwrap();
        let cfg = SimConfig { items, pop, n: 400, missing_rate: 0.9, seed: RngStream::from_seed(5) };
        let sim = simulate_dataset(&cfg).unwrap();
        assert!(sim.dataset.individuals().iter().all(|p| !p.responses.is_empty()));
        for p in sim.dataset.individuals() {
            for r in &p.responses {
                assert!(r.count <= 50);
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let (items, pop) = table1_scenario(2).unwrap();
        let cfg = SimConfig { items, pop, n: 30, missing_rate: 0.2, seed: RngStream::from_seed(11) };
        let a = simulate_dataset(&cfg).unwrap();
        let b = simulate_dataset(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.latents, b.latents);
    }

    #[test]
    fn rejects_bad_config() {
        let (items, pop) = table1_scenario(2).unwrap();
        let cfg = SimConfig { items, pop, n: 30, missing_rate: 1.0, seed: RngStream::from_seed(1) };
        assert!(simulate_dataset(&cfg).is_err());
    }
}
