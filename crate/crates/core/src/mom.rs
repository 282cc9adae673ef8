//! Method-of-moments estimation.
//!
//! Each parameter is recovered by equating a sample moment with its closed
//! form: count mean and variance give `(a, b)` through a one-dimensional root
//! search in the bivariate-normal correlation, pairwise log-time covariances
//! give `σ_τ²`, per-item log-time variances give `α`, log-time means give
//! `β`, and count/log-time covariances give `σ_θτ`.

use crate::error::{OrfError, Result};
use crate::fit::{Diagnostics, FitResult, Method};
use crate::kernels::normal::INV_SQRT_2PI;
use crate::kernels::{bvn_cdf, normal_cdf, normal_quantile, Correlation};
use crate::model::{Dataset, ItemParams, PopulationParams};

/// Upper end of the correlation search interval.
pub const RHO_MAX: f64 = 1.0 - 1e-9;
/// Replacement for a zero discrimination estimate.
pub const MIN_DISCRIMINATION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ItemMoments {
    pub n: usize,
    pub ybar: f64,
    pub s2_y: f64,
    pub tbar: f64,
    pub s2_t: f64,
    pub s_yt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub items: Vec<ItemMoments>,
    /// Log-time covariance for each item pair over individuals observing
    /// both; the diagonal is unused.
    pub pair_cov: Vec<Vec<f64>>,
    pub pair_n: Vec<Vec<usize>>,
}

pub fn compute_moments(data: &Dataset) -> Result<SampleMoments> {
    let n_items = data.n_items();
    let mut per_item: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_items];
    for person in data.individuals() {
        for r in &person.responses {
            per_item[r.item].push((f64::from(r.count), r.log_time));
        }
    }

    let mut items = Vec::with_capacity(n_items);
    for (i, obs) in per_item.iter().enumerate() {
        if obs.len() < 2 {
            return Err(OrfError::InsufficientData(format!(
                "item {} is observed by {} individual(s); at least 2 are required",
                data.items()[i].id,
                obs.len()
            )));
        }
        let n = obs.len() as f64;
        let ybar = obs.iter().map(|o| o.0).sum::<f64>() / n;
        let tbar = obs.iter().map(|o| o.1).sum::<f64>() / n;
        let (mut syy, mut stt, mut syt) = (0.0, 0.0, 0.0);
        for &(y, t) in obs {
            syy += (y - ybar) * (y - ybar);
            stt += (t - tbar) * (t - tbar);
            syt += (y - ybar) * (t - tbar);
        }
        items.push(ItemMoments {
            n: obs.len(),
            ybar,
            s2_y: syy / (n - 1.0),
            tbar,
            s2_t: stt / (n - 1.0),
            s_yt: syt / (n - 1.0),
        });
    }

    let mut pair_cov = vec![vec![0.0; n_items]; n_items];
    let mut pair_n = vec![vec![0; n_items]; n_items];
    for i in 0..n_items {
        pair_n[i][i] = items[i].n;
        pair_cov[i][i] = items[i].s2_t;
        for k in (i + 1)..n_items {
            let pairs: Vec<(f64, f64)> = data
                .individuals()
                .iter()
                .filter_map(|p| Some((p.response(i)?.log_time, p.response(k)?.log_time)))
                .collect();
            if pairs.len() < 2 {
                return Err(OrfError::InsufficientData(format!(
                    "items {} and {} are jointly observed by {} individual(s); at least 2 are required",
                    data.items()[i].id,
                    data.items()[k].id,
                    pairs.len()
                )));
            }
            let n = pairs.len() as f64;
            let m1 = pairs.iter().map(|p| p.0).sum::<f64>() / n;
            let m2 = pairs.iter().map(|p| p.1).sum::<f64>() / n;
            let c = pairs.iter().map(|p| (p.0 - m1) * (p.1 - m2)).sum::<f64>() / (n - 1.0);
            pair_cov[i][k] = c;
            pair_cov[k][i] = c;
            pair_n[i][k] = pairs.len();
            pair_n[k][i] = pairs.len();
        }
    }
    Ok(SampleMoments { items, pair_cov, pair_n })
}

/// Clamp a count mean away from 0 and N by `1/(4·N·m)` where `m` is the
/// item sample size, so that the probit quantile stays finite.
pub fn clamp_count_mean(ybar: f64, n_words: u32, sample_size: usize) -> f64 {
    let n = f64::from(n_words);
    let eps = 1.0 / (4.0 * n * sample_size.max(1) as f64);
    (ybar / n).clamp(eps, 1.0 - eps) * n
}

fn check_count_mean(ybar: f64, n_words: u32) -> Result<()> {
    if !(ybar > 0.0 && ybar < f64::from(n_words)) {
        return Err(OrfError::Domain(format!(
            "count mean {ybar} must lie strictly between 0 and {n_words}"
        )));
    }
    Ok(())
}

/// Correlation solving `Φ₂(q, q; ρ) = (s² + ȳ(ȳ−1)) / (N(N−1))` with
/// `q = Φ⁻¹(ȳ/N)`, by bisection on `[0, 1 − 1e-9]`. Right-hand sides below
/// the independence value give `ρ = 0`.
pub fn solve_rho(ybar: f64, s2_y: f64, n_words: u32) -> Result<f64> {
    check_count_mean(ybar, n_words)?;
    if n_words < 2 {
        return Err(OrfError::Domain("items need at least two words to identify a".into()));
    }
    let n = f64::from(n_words);
    let q = normal_quantile(ybar / n)?;
    let target = (s2_y + ybar * (ybar - 1.0)) / (n * (n - 1.0));
    let residual = |rho: f64| bvn_cdf(q, q, Correlation::new(rho).expect("rho in [0, 1)")) - target;

    if residual(0.0) >= 0.0 {
        return Ok(0.0);
    }
    if residual(RHO_MAX) <= 0.0 {
        return Ok(RHO_MAX);
    }
    let (mut lo, mut hi) = (0.0, RHO_MAX);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(a, b)` from a count mean and variance.
pub fn estimate_accuracy(ybar: f64, s2_y: f64, n_words: u32) -> Result<(f64, f64)> {
    let rho = solve_rho(ybar, s2_y, n_words)?;
    let a = (rho / (1.0 - rho)).sqrt().max(MIN_DISCRIMINATION);
    let q = normal_quantile(ybar / f64::from(n_words))?;
    let b = -(1.0 + a * a).sqrt() / a * q;
    Ok((a, b))
}

/// Average of all pairwise log-time covariances.
pub fn estimate_sigma2_tau(moments: &SampleMoments) -> Result<f64> {
    let n_items = moments.items.len();
    if n_items < 2 {
        return Err(OrfError::InsufficientData(
            "the speed variance needs at least two items".into(),
        ));
    }
    let mut total = 0.0;
    for i in 0..n_items {
        for k in (i + 1)..n_items {
            total += moments.pair_cov[i][k];
        }
    }
    Ok(2.0 * total / (n_items * (n_items - 1)) as f64)
}

/// `(α, β)` per item; `α` is infinite when the log-time variance does not
/// exceed the speed variance.
pub fn estimate_speed(moments: &SampleMoments, sigma2_tau: f64) -> Vec<(f64, f64)> {
    moments
        .items
        .iter()
        .map(|m| {
            let excess = m.s2_t - sigma2_tau;
            let alpha = if excess > 0.0 { 1.0 / excess.sqrt() } else { f64::INFINITY };
            (alpha, m.tbar)
        })
        .collect()
}

/// Average over items of the inverted count/log-time covariance equation.
pub fn estimate_cross_cov(moments: &SampleMoments, accuracy: &[(f64, f64)], n_words: &[u32]) -> f64 {
    let n_items = moments.items.len();
    let total: f64 = moments
        .items
        .iter()
        .zip(accuracy)
        .zip(n_words)
        .map(|((m, &(a, b)), &n)| {
            let a2 = a * a;
            let slope = f64::from(n) * INV_SQRT_2PI * (a2 / (a2 + 1.0)).sqrt()
                * (-0.5 * a2 * b * b / (a2 + 1.0)).exp();
            m.s_yt / slope
        })
        .sum();
    -total / n_items as f64
}

/// Floor on the speed variance estimate.
pub const MIN_SIGMA2_TAU: f64 = 1e-6;

pub fn fit_mom(data: &Dataset) -> Result<FitResult> {
    let moments = compute_moments(data)?;
    let n_words: Vec<u32> = data.items().iter().map(|i| i.n_words).collect();
    let mut flags = Vec::new();

    let mut accuracy = Vec::with_capacity(n_words.len());
    for (k, (m, &n)) in moments.items.iter().zip(&n_words).enumerate() {
        let ybar = clamp_count_mean(m.ybar, n, m.n);
        if ybar != m.ybar {
            flags.push(format!("item {}: count mean clamped", data.items()[k].id));
        }
        let (a, b) = estimate_accuracy(ybar, m.s2_y, n)?;
        if a == MIN_DISCRIMINATION {
            flags.push(format!("item {}: zero discrimination estimate", data.items()[k].id));
        }
        accuracy.push((a, b));
    }

    let mut sigma2_tau = estimate_sigma2_tau(&moments)?;
    if sigma2_tau < MIN_SIGMA2_TAU {
        flags.push(format!("speed variance estimate {sigma2_tau} floored at {MIN_SIGMA2_TAU}"));
        sigma2_tau = MIN_SIGMA2_TAU;
    }
    let speed = estimate_speed(&moments, sigma2_tau);
    for (k, &(alpha, _)) in speed.iter().enumerate() {
        if alpha.is_infinite() {
            flags.push(format!("item {}: infinite alpha estimate", data.items()[k].id));
        }
    }

    let mut sigma_theta_tau = estimate_cross_cov(&moments, &accuracy, &n_words);
    let bound = sigma2_tau.sqrt() - 1e-6;
    if sigma_theta_tau.abs() >= bound {
        flags.push(format!(
            "latent covariance {sigma_theta_tau} shrunk to the positive-definite boundary"
        ));
        sigma_theta_tau = sigma_theta_tau.signum() * bound.max(0.0);
    }

    let items = accuracy
        .iter()
        .zip(&speed)
        .zip(&n_words)
        .map(|((&(a, b), &(alpha, beta)), &n)| ItemParams::new(a, b, alpha, beta, n))
        .collect::<Result<Vec<_>>>()?;
    let pop = PopulationParams::new(sigma2_tau, sigma_theta_tau)?;
    Ok(FitResult {
        method: Method::Mom,
        item_ids: data.items().iter().map(|i| i.id.clone()).collect(),
        items,
        pop,
        diagnostics: Diagnostics { flags, ..Diagnostics::default() },
    })
}

/// Expected count under the independence value of the correlation equation.
pub fn independence_rhs(ybar: f64, n_words: u32) -> Result<f64> {
    check_count_mean(ybar, n_words)?;
    let p = normal_cdf(normal_quantile(ybar / f64::from(n_words))?);
    Ok(p * p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{cov_count_logtime, mean_count, Individual, ItemSpec, Response};
    use approx::assert_abs_diff_eq;

    /// Count variance whose right-hand side equals `target`.
    fn variance_for(target: f64, ybar: f64, n: u32) -> f64 {
        let n = f64::from(n);
        target * n * (n - 1.0) - ybar * (ybar - 1.0)
    }

    #[test]
    fn rho_from_arcsine_identity() {
        let ybar = 5.0;
        let s2 = variance_for(1.0 / 3.0, ybar, 10);
        assert_abs_diff_eq!(solve_rho(ybar, s2, 10).unwrap(), 0.5, epsilon = 1e-8);
    }

    #[test]
    fn rho_boundary_at_independence() {
        let ybar = 7.0;
        let rhs0 = independence_rhs(ybar, 10).unwrap();
        assert_eq!(solve_rho(ybar, variance_for(rhs0, ybar, 10), 10).unwrap(), 0.0);
        assert_eq!(solve_rho(ybar, variance_for(rhs0 - 0.01, ybar, 10), 10).unwrap(), 0.0);
    }

    #[test]
    fn rho_residual_is_tiny() {
        let (ybar, n) = (18.3, 25);
        let s2 = 12.0;
        let rho = solve_rho(ybar, s2, n).unwrap();
        let q = normal_quantile(ybar / 25.0).unwrap();
        let target = (s2 + ybar * (ybar - 1.0)) / 600.0;
        assert!((bvn_cdf(q, q, Correlation::new(rho).unwrap()) - target).abs() <= 1e-10);
    }

    #[test]
    fn rho_monotone_in_variance() {
        let mut prev = -1.0;
        for k in 0..40 {
            let rho = solve_rho(15.0, 2.0 + f64::from(k), 20).unwrap();
            assert!(rho >= prev);
            prev = rho;
        }
    }

    #[test]
    fn rho_domain_errors() {
        assert!(matches!(solve_rho(0.0, 1.0, 10), Err(OrfError::Domain(_))));
        assert!(matches!(solve_rho(10.0, 1.0, 10), Err(OrfError::Domain(_))));
    }

    #[test]
    fn accuracy_at_half() {
        let s2 = variance_for(1.0 / 3.0, 5.0, 10);
        let (a, b) = estimate_accuracy(5.0, s2, 10).unwrap();
        assert_abs_diff_eq!(a, 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(b, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn accuracy_matches_mean_exactly() {
        for &(ybar, s2, n) in &[(17.8, 7.5, 19), (6.2, 1.1, 8), (20.0, 19.7, 25), (3.0, 0.5, 4)] {
            let (a, b) = estimate_accuracy(ybar, s2, n).unwrap();
            let item = ItemParams::new(a, b, 1.0, 0.0, n).unwrap();
            assert_abs_diff_eq!(mean_count(&item), ybar, epsilon = 1e-9);
        }
    }

    #[test]
    fn speed_estimates() {
        let m = ItemMoments { n: 10, ybar: 1.0, s2_y: 1.0, tbar: -1.5, s2_t: 0.3 + 0.04, s_yt: 0.0 };
        let moments = SampleMoments { items: vec![m.clone(), ItemMoments { s2_t: 0.2, ..m }], pair_cov: vec![], pair_n: vec![] };
        let speed = estimate_speed(&moments, 0.3);
        assert_abs_diff_eq!(speed[0].0, 5.0, epsilon = 1e-9);
        assert_eq!(speed[0].1, -1.5);
        assert!(speed[1].0.is_infinite());
    }

    #[test]
    fn sigma2_tau_averages_pairs() {
        let blank = ItemMoments { n: 3, ybar: 1.0, s2_y: 1.0, tbar: 0.0, s2_t: 1.0, s_yt: 0.0 };
        let c = 0.07;
        let moments = SampleMoments {
            items: vec![blank.clone(), blank.clone(), blank],
            pair_cov: vec![vec![1.0, c, c], vec![c, 1.0, c], vec![c, c, 1.0]],
            pair_n: vec![vec![3; 3]; 3],
        };
        assert_abs_diff_eq!(estimate_sigma2_tau(&moments).unwrap(), c, epsilon = 1e-15);
        let single = SampleMoments { items: vec![moments.items[0].clone()], pair_cov: vec![vec![1.0]], pair_n: vec![vec![3]] };
        assert!(estimate_sigma2_tau(&single).is_err());
    }

    #[test]
    fn cross_cov_inverts_population_value() {
        let item = ItemParams::new(0.65, -1.5, 6.0, -1.6, 25).unwrap();
        let pop = PopulationParams::new(0.24155_f64.powi(2), -0.18116).unwrap();
        let s_yt = cov_count_logtime(&item, &pop);
        let m = ItemMoments { n: 5, ybar: 20.0, s2_y: 1.0, tbar: 0.0, s2_t: 1.0, s_yt };
        let moments = SampleMoments { items: vec![m], pair_cov: vec![vec![1.0]], pair_n: vec![vec![5]] };
        assert_abs_diff_eq!(estimate_cross_cov(&moments, &[(item.a, item.b)], &[25]), -0.18116, epsilon = 1e-9);
        let zero = SampleMoments { items: vec![ItemMoments { s_yt: 0.0, ..moments.items[0].clone() }], ..moments };
        assert_eq!(estimate_cross_cov(&zero, &[(item.a, item.b)], &[25]), 0.0);
    }

    fn toy_data() -> Dataset {
        let items = vec![ItemSpec { id: "i1".into(), n_words: 10 }, ItemSpec { id: "i2".into(), n_words: 8 }];
        let people = vec![
            Individual::new("a", vec![Response { item: 0, count: 6, log_time: 1.0 }, Response { item: 1, count: 3, log_time: 0.5 }]),
            Individual::new("b", vec![Response { item: 0, count: 8, log_time: 2.0 }, Response { item: 1, count: 5, log_time: 1.5 }]),
        ];
        Dataset::new(items, people).unwrap()
    }

    #[test]
    fn hand_computed_moments() {
        let m = compute_moments(&toy_data()).unwrap();
        let i0 = &m.items[0];
        assert_eq!(i0.n, 2);
        assert_eq!(i0.ybar, 7.0);
        assert_eq!(i0.s2_y, 2.0);
        assert_eq!(i0.tbar, 1.5);
        assert_eq!(i0.s2_t, 0.5);
        assert_eq!(i0.s_yt, 1.0);
        assert_eq!(m.pair_cov[0][1], 0.5);
        assert_eq!(m.pair_n[0][1], 2);
    }

    #[test]
    fn constant_counts_have_zero_variance() {
        let items = vec![ItemSpec { id: "i1".into(), n_words: 10 }];
        let people = (0..4)
            .map(|k| Individual::new(format!("p{k}"), vec![Response { item: 0, count: 7, log_time: f64::from(k) }]))
            .collect();
        let m = compute_moments(&Dataset::new(items, people).unwrap()).unwrap();
        assert_eq!(m.items[0].s2_y, 0.0);
    }

    #[test]
    fn insufficient_data_names_item() {
        let items = vec![ItemSpec { id: "lonely".into(), n_words: 10 }];
        let people = vec![Individual::new("a", vec![Response { item: 0, count: 6, log_time: 1.0 }])];
        let err = compute_moments(&Dataset::new(items, people).unwrap()).unwrap_err();
        assert!(err.to_string().contains("lonely"));
    }

    #[test]
    fn clamping_keeps_estimates_finite() {
        assert_abs_diff_eq!(clamp_count_mean(10.0, 10, 5), 10.0 - 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(clamp_count_mean(0.0, 10, 5), 0.05, epsilon = 1e-12);
        assert_eq!(clamp_count_mean(4.0, 10, 5), 4.0);
    }
}
