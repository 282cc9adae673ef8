//! Replicate simulation studies: simulate, fit by MOM and/or MCEM, score,
//! and aggregate √n-scaled standard errors, RMSEs and recovery correlations.

use crate::error::{OrfError, Result};
use crate::fit::FitResult;
use crate::kernels::RngStream;
use crate::mcem::{fit_mcem, McemConfig, MONITOR_QUAD_ORDER};
use crate::model::{observed_loglik, ItemParams, PopulationParams};
use crate::mom::fit_mom;
use crate::scoring::{eap_scores, recovery_correlations};
use crate::simulate::{simulate_dataset, table1_scenario, SimConfig};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMethods {
    Mom,
    Mcem,
    Both,
}

impl std::str::FromStr for StudyMethods {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mom" => Ok(StudyMethods::Mom),
            "mcem" => Ok(StudyMethods::Mcem),
            "both" => Ok(StudyMethods::Both),
            other => Err(format!("unknown method {other}; expected mom, mcem or both")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub scenario: u8,
    pub n: usize,
    pub replicates: usize,
    pub methods: StudyMethods,
    pub seed: u64,
    pub missing_rate: f64,
    /// Draws per individual for the recovery correlations.
    pub score_m: usize,
    /// MCEM schedule, tolerance and rejection budget; the seed is replaced per replicate.
    pub mcem: McemConfig,
}

impl StudyConfig {
    pub fn new(scenario: u8, n: usize, replicates: usize, methods: StudyMethods, seed: u64) -> Self {
        Self { scenario, n, replicates, methods, seed, missing_rate: 0.0, score_m: 20, mcem: McemConfig::default() }
    }
}

/// Fit, fit quality and recovery for one method on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub fit: FitResult,
    pub observed_loglik: f64,
    pub cor_theta: f64,
    pub cor_tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub mom: Option<MethodOutcome>,
    pub mcem: Option<MethodOutcome>,
    pub error: Option<String>,
}

impl ReplicateOutcome {
    /// Whether every MCEM iteration left Q̂ on its own draws no lower.
    pub fn q_monotone(&self) -> Option<bool> {
        self.mcem
            .as_ref()
            .map(|m| m.fit.diagnostics.trace.iter().all(|r| r.q_after >= r.q_before))
    }
}

pub const PARAMETER_GROUPS: [&str; 6] = ["a", "b", "alpha", "beta", "sigma2_tau", "sigma_theta_tau"];

/// One row of the ASE/ARMSE table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub parameter: &'static str,
    pub sqrt_n_ase: f64,
    pub sqrt_n_armse: f64,
    /// Non-finite estimates left out of the averages.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub rows: Vec<ErrorRow>,
    pub mean_cor_theta: f64,
    pub mean_cor_tau: f64,
    pub replicates_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub n: usize,
    pub scenario: u8,
    pub outcomes: Vec<ReplicateOutcome>,
    pub mom: Option<MethodSummary>,
    pub mcem: Option<MethodSummary>,
    pub failures: usize,
}

fn outcome(
    data: &crate::model::Dataset,
    latents: &[crate::model::LatentPair],
    fit: FitResult,
    score_m: usize,
    score_seed: u64,
) -> Result<MethodOutcome> {
    let observed = observed_loglik(data, &fit.items, &fit.pop, MONITOR_QUAD_ORDER)?;
    let scores = eap_scores(data, &fit, score_m, score_seed)?;
    let (cor_theta, cor_tau) = recovery_correlations(latents, &scores)?;
    Ok(MethodOutcome { fit, observed_loglik: observed, cor_theta, cor_tau })
}

fn run_replicate(
    cfg: &StudyConfig,
    items: &[ItemParams],
    pop: &PopulationParams,
    r: usize,
) -> Result<(Option<MethodOutcome>, Option<MethodOutcome>)> {
    let root = RngStream::from_seed(cfg.seed).child(r as u64);
    let sim = simulate_dataset(&SimConfig {
        items: items.to_vec(),
        pop: *pop,
        n: cfg.n,
        missing_rate: cfg.missing_rate,
        seed: root.child(0),
    })?;
    let score_seed = root.child(2).stream_id;
    let mom_fit = fit_mom(&sim.dataset)?;
    let mcem = match cfg.methods {
        StudyMethods::Mom => None,
        _ => {
            let mcfg = McemConfig { seed: root.child(1), ..cfg.mcem.clone() };
            let fit = fit_mcem(&sim.dataset, &mom_fit, &mcfg)?;
            Some(outcome(&sim.dataset, &sim.latents, fit, cfg.score_m, score_seed)?)
        }
    };
    let mom = match cfg.methods {
        StudyMethods::Mcem => {
            // still needed for the likelihood comparison
            let observed = observed_loglik(&sim.dataset, &mom_fit.items, &mom_fit.pop, MONITOR_QUAD_ORDER)?;
            Some(MethodOutcome { fit: mom_fit, observed_loglik: observed, cor_theta: f64::NAN, cor_tau: f64::NAN })
        }
        _ => Some(outcome(&sim.dataset, &sim.latents, mom_fit, cfg.score_m, score_seed)?),
    };
    Ok((mom, mcem))
}

fn group_values(fit: &FitResult, group: &str) -> Vec<f64> {
    match group {
        "a" => fit.items.iter().map(|i| i.a).collect(),
        "b" => fit.items.iter().map(|i| i.b).collect(),
        "alpha" => fit.items.iter().map(|i| i.alpha).collect(),
        "beta" => fit.items.iter().map(|i| i.beta).collect(),
        "sigma2_tau" => vec![fit.pop.sigma2_tau],
        _ => vec![fit.pop.sigma_theta_tau],
    }
}

fn truth_values(items: &[ItemParams], pop: &PopulationParams, group: &str) -> Vec<f64> {
    let fit = FitResult {
        method: crate::fit::Method::Mom,
        item_ids: Vec::new(),
        items: items.to_vec(),
        pop: *pop,
        diagnostics: Default::default(),
    };
    group_values(&fit, group)
}

/// √n-scaled ASE (across-replicate standard deviation) and ARMSE, each
/// averaged over the parameters of a group. Non-finite estimates are
/// excluded and counted.
pub fn summarize(fits: &[&FitResult], items: &[ItemParams], pop: &PopulationParams, n: usize) -> Vec<ErrorRow> {
    let root_n = (n as f64).sqrt();
    PARAMETER_GROUPS
        .iter()
        .map(|&group| {
            let truth = truth_values(items, pop, group);
            let mut excluded = 0;
            let (mut ase, mut armse) = (0.0, 0.0);
            for (k, &t) in truth.iter().enumerate() {
                let est: Vec<f64> = fits
                    .iter()
                    .map(|f| group_values(f, group)[k])
                    .filter(|v| {
                        let ok = v.is_finite();
                        if !ok {
                            excluded += 1;
                        }
                        ok
                    })
                    .collect();
                let m = est.len() as f64;
                let mean = est.iter().sum::<f64>() / m;
                ase += (est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
                armse += (est.iter().map(|v| (v - t).powi(2)).sum::<f64>() / m).sqrt();
            }
            let p = truth.len() as f64;
            ErrorRow { parameter: group, sqrt_n_ase: root_n * ase / p, sqrt_n_armse: root_n * armse / p, excluded }
        })
        .collect()
}

fn method_summary(
    outcomes: Vec<&MethodOutcome>,
    items: &[ItemParams],
    pop: &PopulationParams,
    n: usize,
) -> Option<MethodSummary> {
    if outcomes.is_empty() {
        return None;
    }
    let fits: Vec<&FitResult> = outcomes.iter().map(|o| &o.fit).collect();
    let k = outcomes.len() as f64;
    Some(MethodSummary {
        rows: summarize(&fits, items, pop, n),
        mean_cor_theta: outcomes.iter().map(|o| o.cor_theta).sum::<f64>() / k,
        mean_cor_tau: outcomes.iter().map(|o| o.cor_tau).sum::<f64>() / k,
        replicates_used: outcomes.len(),
    })
}

/// Runs the replicates in parallel; replicate `r` draws all randomness
/// from child stream `r` of the master seed. Failed replicates are kept in
/// `outcomes` with their error and left out of the summaries.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    if cfg.replicates == 0 || cfg.n < 2 {
        return Err(OrfError::InvalidParameter("need at least one replicate and two individuals".into()));
    }
    cfg.mcem.validate()?;
    let (items, pop) = table1_scenario(cfg.scenario)?;
    let outcomes: Vec<ReplicateOutcome> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| match run_replicate(cfg, &items, &pop, r) {
            Ok((mom, mcem)) => ReplicateOutcome { replicate: r, mom, mcem, error: None },
            Err(e) => ReplicateOutcome { replicate: r, mom: None, mcem: None, error: Some(e.to_string()) },
        })
        .collect();
    let failures = outcomes.iter().filter(|o| o.error.is_some()).count();
    let ok: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| o.error.is_none()).collect();
    let mom = if cfg.methods == StudyMethods::Mcem {
        None
    } else {
        method_summary(ok.iter().filter_map(|o| o.mom.as_ref()).collect(), &items, &pop, cfg.n)
    };
    let mcem = method_summary(ok.iter().filter_map(|o| o.mcem.as_ref()).collect(), &items, &pop, cfg.n);
    Ok(StudyReport { n: cfg.n, scenario: cfg.scenario, outcomes, mom, mcem, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::Method;

    #[test]
    fn summary_on_known_estimates() {
        let (items, pop) = table1_scenario(1).unwrap();
        let shifted = |d: f64| {
            let mut it = items.clone();
            for i in it.iter_mut() {
                i.a += d;
            }
            FitResult { method: Method::Mom, item_ids: vec![], items: it, pop, diagnostics: Default::default() }
        };
        let f1 = shifted(0.1);
        let f2 = shifted(-0.1);
        let mut f3 = shifted(0.0);
        f3.items[0].alpha = f64::INFINITY;
        let rows = summarize(&[&f1, &f2, &f3], &items, &pop, 4);
        let a = &rows[0];
        assert!((a.sqrt_n_armse - 2.0 * (0.02f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((a.sqrt_n_ase - 2.0 * 0.1).abs() < 1e-12);
        assert_eq!(rows[2].excluded, 1);
        assert_eq!(rows.len(), 6);
    }

    #[test]
    fn small_mom_study() {
        let report = run_study(&StudyConfig::new(2, 40, 2, StudyMethods::Mom, 3)).unwrap();
        assert_eq!(report.failures, 0);
        assert!(report.mcem.is_none());
        assert_eq!(report.mom.as_ref().unwrap().rows.len(), 6);
        let again = run_study(&StudyConfig::new(2, 40, 2, StudyMethods::Mom, 3)).unwrap();
        assert_eq!(report, again);
    }
}
