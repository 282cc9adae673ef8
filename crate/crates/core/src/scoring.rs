//! Posterior-mean trait scores, recovery correlations and leave-item-out
//! prediction.

use crate::error::{OrfError, Result};
use crate::fit::FitResult;
use crate::kernels::{normal_cdf, RngStream};
use crate::mcem::draw_individual;
use crate::model::likelihood::check_items;
use crate::model::{Dataset, LatentPair};
use rayon::prelude::*;

/// Default rejection budget per draw when scoring.
pub const MAX_REJECTION_ATTEMPTS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub id: String,
    pub theta_hat: f64,
    pub tau_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
    pub m: usize,
    pub seed: u64,
}

impl ScoreTable {
    pub fn latents(&self) -> Vec<LatentPair> {
        self.rows.iter().map(|r| LatentPair { theta: r.theta_hat, tau: r.tau_hat }).collect()
    }
}

/// Averages of `m` posterior draws per individual under the fitted parameters.
pub fn eap_scores(data: &Dataset, fit: &FitResult, m: usize, seed: u64) -> Result<ScoreTable> {
    if m == 0 {
        return Err(OrfError::InvalidParameter("at least one draw per individual is required".into()));
    }
    fit.validate()?;
    check_items(data, &fit.items)?;
    let stream = RngStream::from_seed(seed);
    let rows = data
        .individuals()
        .par_iter()
        .map(|rec| {
            let draws = draw_individual(rec, &fit.items, &fit.pop, m, stream.keyed(&rec.id), MAX_REJECTION_ATTEMPTS)?;
            let k = m as f64;
            Ok(ScoreRow {
                id: rec.id.clone(),
                theta_hat: draws.iter().map(|d| d.theta).sum::<f64>() / k,
                tau_hat: draws.iter().map(|d| d.tau).sum::<f64>() / k,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable { rows, m, seed })
}

fn pearson(x: &[f64], y: &[f64], label: &str) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(OrfError::Degenerate(format!("{label} has zero variance")));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Pearson correlations of true and estimated `(θ, τ)`.
pub fn recovery_correlations(truth: &[LatentPair], scores: &ScoreTable) -> Result<(f64, f64)> {
    if truth.len() != scores.rows.len() || truth.len() < 2 {
        return Err(OrfError::InvalidParameter(format!(
            "need matching score and truth vectors of length ≥ 2, got {} and {}",
            scores.rows.len(),
            truth.len()
        )));
    }
    let est = scores.latents();
    let col = |v: &[LatentPair], f: fn(&LatentPair) -> f64| v.iter().map(f).collect::<Vec<_>>();
    let theta = pearson(&col(truth, |p| p.theta), &col(&est, |p| p.theta), "theta")?;
    let tau = pearson(&col(truth, |p| p.tau), &col(&est, |p| p.tau), "tau")?;
    Ok((theta, tau))
}

fn item_index(data: &Dataset, item_id: &str) -> Result<usize> {
    data.item_index(item_id)
        .ok_or_else(|| OrfError::InvalidData(format!("unknown item id {item_id}")))
}

/// Scores computed with the given item removed from every record.
pub fn loo_scores(data: &Dataset, fit: &FitResult, item_id: &str, m: usize, seed: u64) -> Result<ScoreTable> {
    let idx = item_index(data, item_id)?;
    eap_scores(&data.without_item(idx), fit, m, seed)
}

/// Leave-item-out prediction errors for one item.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub item_id: String,
    pub n_eval: usize,
    pub rspe0_count: f64,
    pub rspe1_count: f64,
    pub rspe0_time: f64,
    pub rspe1_time: f64,
}

impl PredictionRow {
    pub fn rel_decrease_count(&self) -> f64 {
        (self.rspe0_count - self.rspe1_count) / self.rspe0_count
    }

    pub fn rel_decrease_time(&self) -> f64 {
        (self.rspe0_time - self.rspe1_time) / self.rspe0_time
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport {
    pub rows: Vec<PredictionRow>,
}

/// Count and raw-time predictions `(Ŷ⁰, Ŷ¹, T̂⁰, T̂¹)` for one held-out item
/// given that individual's leave-item-out scores.
pub fn predictors(fit: &FitResult, item: usize, loo: &ScoreRow) -> (f64, f64, f64, f64) {
    let it = &fit.items[item];
    let n = f64::from(it.n_words);
    let half_resid = 0.5 * it.residual_var();
    (
        n * normal_cdf(it.marginal_probit()),
        n * normal_cdf(it.a * (loo.theta_hat - it.b)),
        (it.beta + 0.5 * fit.pop.sigma2_tau + half_resid).exp(),
        (it.beta - loo.tau_hat + half_resid).exp(),
    )
}

pub fn predict(data: &Dataset, fit: &FitResult, item_id: &str, loo: &ScoreTable) -> Result<PredictionRow> {
    let idx = item_index(data, item_id)?;
    check_items(data, &fit.items)?;
    if loo.rows.len() != data.n_individuals() {
        return Err(OrfError::InvalidParameter("score table does not match the dataset".into()));
    }
    let (mut sy0, mut sy1, mut st0, mut st1) = (0.0, 0.0, 0.0, 0.0);
    let mut n_eval = 0usize;
    for (rec, score) in data.individuals().iter().zip(&loo.rows) {
        let Some(r) = rec.response(idx) else { continue };
        if score.id != rec.id {
            return Err(OrfError::InvalidParameter(format!(
                "score row {} does not match individual {}",
                score.id, rec.id
            )));
        }
        let (y0, y1, t0, t1) = predictors(fit, idx, score);
        let y = f64::from(r.count);
        let t = r.log_time.exp();
        sy0 += (y - y0).powi(2);
        sy1 += (y - y1).powi(2);
        st0 += (t - t0).powi(2);
        st1 += (t - t1).powi(2);
        n_eval += 1;
    }
    if n_eval == 0 {
        return Err(OrfError::InsufficientData(format!("item {item_id} has no observations to predict")));
    }
    let k = n_eval as f64;
    Ok(PredictionRow {
        item_id: item_id.to_string(),
        n_eval,
        rspe0_count: (sy0 / k).sqrt(),
        rspe1_count: (sy1 / k).sqrt(),
        rspe0_time: (st0 / k).sqrt(),
        rspe1_time: (st1 / k).sqrt(),
    })
}

/// Leave-item-out prediction for every item; item `k` uses seed stream `k`.
pub fn predict_all(data: &Dataset, fit: &FitResult, m: usize, seed: u64) -> Result<PredictionReport> {
    let root = RngStream::from_seed(seed);
    let rows = data
        .items()
        .par_iter()
        .enumerate()
        .map(|(k, spec)| {
            let item_seed = root.child(k as u64).stream_id;
            let loo = loo_scores(data, fit, &spec.id, m, item_seed)?;
            predict(data, fit, &spec.id, &loo)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionReport { rows })
}
