//! Closed-form and Newton maximizers of the Monte Carlo objective Q̂.

use super::estep::LatentDraws;
use crate::error::{OrfError, Result};
use crate::kernels::{inv_mills, log_normal_cdf};
use crate::model::{complete_loglik_individual, Dataset, ItemParams, PopulationParams};

pub const A_MIN: f64 = 1e-6;
pub const A_MAX: f64 = 50.0;
pub const B_MAX: f64 = 20.0;
const NEWTON_MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;

/// Neumaier-compensated sum, so reductions do not drift with summation order.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Sum {
    total: f64,
    comp: f64,
}

impl Sum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.total + x;
        if self.total.abs() >= x.abs() {
            self.comp += (self.total - t) + x;
        } else {
            self.comp += (x - t) + self.total;
        }
        self.total = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.total + self.comp
    }
}

fn check_draws(draws: &LatentDraws, data: &Dataset) -> Result<usize> {
    if draws.draws.len() != data.n_individuals() {
        return Err(OrfError::InvalidParameter(format!(
            "draws cover {} individuals but the dataset has {}",
            draws.draws.len(),
            data.n_individuals()
        )));
    }
    let m = draws.m();
    if m == 0 || draws.draws.iter().any(|d| d.len() != m) {
        return Err(OrfError::InvalidParameter("every individual needs the same positive number of draws".into()));
    }
    Ok(m)
}

/// Monte Carlo objective: the complete-data log-likelihood averaged over
/// each individual's draws and summed over individuals.
pub fn q_hat(draws: &LatentDraws, data: &Dataset, items: &[ItemParams], pop: &PopulationParams) -> Result<f64> {
    let m = check_draws(draws, data)? as f64;
    let mut total = Sum::default();
    for (rec, d) in data.individuals().iter().zip(&draws.draws) {
        let mut own = Sum::default();
        for &lat in d {
            own.add(complete_loglik_individual(rec, lat, items, pop));
        }
        total.add(own.value() / m);
    }
    Ok(total.value())
}

/// Monte Carlo standard error of `q_hat(new) − q_hat(old)` on the same draws.
pub fn q_diff_se(
    draws: &LatentDraws,
    data: &Dataset,
    old: (&[ItemParams], &PopulationParams),
    new: (&[ItemParams], &PopulationParams),
) -> Result<f64> {
    let m = check_draws(draws, data)?;
    if m < 2 {
        return Ok(0.0);
    }
    let mut var = Sum::default();
    for (rec, d) in data.individuals().iter().zip(&draws.draws) {
        let diffs: Vec<f64> = d
            .iter()
            .map(|&lat| {
                complete_loglik_individual(rec, lat, new.0, new.1) - complete_loglik_individual(rec, lat, old.0, old.1)
            })
            .collect();
        let mean = diffs.iter().sum::<f64>() / m as f64;
        let s2 = diffs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1) as f64;
        var.add(s2 / m as f64);
    }
    Ok(var.value().max(0.0).sqrt())
}

/// `(α, β)` per item. A zero residual gives the infinite-α sentinel.
pub fn m_step_speed(draws: &LatentDraws, data: &Dataset) -> Result<Vec<(f64, f64)>> {
    check_draws(draws, data)?;
    let mut out = Vec::with_capacity(data.n_items());
    for (i, spec) in data.items().iter().enumerate() {
        let mut s = Sum::default();
        let mut count = 0usize;
        for (rec, d) in data.individuals().iter().zip(&draws.draws) {
            if let Some(r) = rec.response(i) {
                for lat in d {
                    s.add(r.log_time + lat.tau);
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(OrfError::InsufficientData(format!("item {} is not observed", spec.id)));
        }
        let beta = s.value() / count as f64;
        let mut ss = Sum::default();
        for (rec, d) in data.individuals().iter().zip(&draws.draws) {
            if let Some(r) = rec.response(i) {
                for lat in d {
                    let e = r.log_time - beta + lat.tau;
                    ss.add(e * e);
                }
            }
        }
        let resid = ss.value() / count as f64;
        let alpha = if resid > 0.0 { 1.0 / resid.sqrt() } else { f64::INFINITY };
        out.push((alpha, beta));
    }
    Ok(out)
}

/// Result of the probit-binomial maximization for one item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyStep {
    pub a: f64,
    pub b: f64,
    /// The iteration stopped on the `(a, b)` box boundary.
    pub at_boundary: bool,
}

struct ProbitObs {
    theta: f64,
    success: f64,
    failure: f64,
}

fn in_box(c: [f64; 2]) -> bool {
    let a = c[0];
    a > A_MIN && a <= A_MAX && (-c[1] / a).abs() <= B_MAX
}

fn probit_objective(obs: &[ProbitObs], c: [f64; 2], scale: f64) -> f64 {
    let mut s = Sum::default();
    for o in obs {
        let eta = c[0] * o.theta + c[1];
        let mut v = 0.0;
        if o.success > 0.0 {
            v += o.success * log_normal_cdf(eta);
        }
        if o.failure > 0.0 {
            v += o.failure * log_normal_cdf(-eta);
        }
        s.add(v);
    }
    s.value() * scale
}

fn probit_derivs(obs: &[ProbitObs], c: [f64; 2], scale: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for o in obs {
        let eta = c[0] * o.theta + c[1];
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        if o.success > 0.0 {
            let lam = inv_mills(eta);
            d1 += o.success * lam;
            d2 -= o.success * lam * (eta + lam);
        }
        if o.failure > 0.0 {
            let lam = inv_mills(-eta);
            d1 -= o.failure * lam;
            d2 -= o.failure * lam * (lam - eta);
        }
        g[0] += d1 * o.theta;
        g[1] += d1;
        h[0][0] += d2 * o.theta * o.theta;
        h[0][1] += d2 * o.theta;
        h[1][1] += d2;
    }
    h[1][0] = h[0][1];
    for v in g.iter_mut() {
        *v *= scale;
    }
    for row in h.iter_mut() {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    (g, h)
}

fn maximize_probit(obs: &[ProbitObs], start: [f64; 2], scale: f64, label: &str) -> Result<([f64; 2], bool)> {
    let mut c = start;
    let mut f = probit_objective(obs, c, scale);
    for _ in 0..NEWTON_MAX_ITER {
        let (g, h) = probit_derivs(obs, c, scale);
        if g[0].abs().max(g[1].abs()) < GRAD_TOL {
            return Ok((c, false));
        }
        // Newton direction; fall back to steepest ascent if the Hessian is not negative definite
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let mut dir = if h[0][0] < 0.0 && det > 0.0 {
            [(-h[1][1] * g[0] + h[0][1] * g[1]) / det, (h[1][0] * g[0] - h[0][0] * g[1]) / det]
        } else {
            g
        };
        if dir[0] * g[0] + dir[1] * g[1] <= 0.0 {
            dir = g;
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = [c[0] + t * dir[0], c[1] + t * dir[1]];
            if in_box(cand) || !in_box(c) {
                let fc = probit_objective(obs, cand, scale);
                if fc >= f {
                    moved = cand != c;
                    c = cand;
                    f = fc;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            // no ascent inside the box: either the optimum is outside it or
            // the objective is flat to rounding at the optimum
            let (g, _) = probit_derivs(obs, c, scale);
            let near_opt = g[0].abs().max(g[1].abs()) < 1e3 * GRAD_TOL;
            return Ok((c, !near_opt));
        }
    }
    let (g, _) = probit_derivs(obs, c, scale);
    if g[0].abs().max(g[1].abs()) < GRAD_TOL {
        return Ok((c, false));
    }
    Err(OrfError::NoConvergence(format!(
        "accuracy update for item {label} did not converge in {NEWTON_MAX_ITER} iterations"
    )))
}

/// `(a, b)` per item by damped Newton on the probit regression
/// `Φ(c₁θ + c₀)` over all draws, starting from the parameters the draws
/// were taken under so the objective cannot decrease.
pub fn m_step_accuracy(draws: &LatentDraws, data: &Dataset) -> Result<Vec<AccuracyStep>> {
    let m = check_draws(draws, data)?;
    let weight = 1.0 / m as f64;
    let mut out = Vec::with_capacity(data.n_items());
    for (i, spec) in data.items().iter().enumerate() {
        let mut obs = Vec::new();
        for (rec, d) in data.individuals().iter().zip(&draws.draws) {
            if let Some(r) = rec.response(i) {
                for lat in d {
                    obs.push(ProbitObs {
                        theta: lat.theta,
                        success: weight * f64::from(r.count),
                        failure: weight * f64::from(spec.n_words - r.count),
                    });
                }
            }
        }
        if obs.is_empty() {
            return Err(OrfError::InsufficientData(format!("item {} is not observed", spec.id)));
        }
        let n_obs = obs.len() / m;
        let scale = 1.0 / (n_obs as f64 * f64::from(spec.n_words));
        let init = &draws.items[i];
        let ([c1, c0], at_boundary) = maximize_probit(&obs, [init.a, -init.a * init.b], scale, &spec.id)?;
        out.push(AccuracyStep { a: c1, b: -c0 / c1, at_boundary });
    }
    Ok(out)
}

/// Latent covariance maximizing the prior terms of Q̂ with `Var θ = 1`,
/// through the regression of τ on θ.
pub fn m_step_covariance(draws: &LatentDraws) -> Result<PopulationParams> {
    let mut stt = Sum::default();
    let mut sqq = Sum::default();
    let mut count = 0usize;
    for lat in draws.draws.iter().flatten() {
        stt.add(lat.theta * lat.tau);
        sqq.add(lat.theta * lat.theta);
        count += 1;
    }
    if count < 2 {
        return Err(OrfError::InsufficientData("the covariance update needs at least two draws".into()));
    }
    if sqq.value() <= 0.0 {
        return Err(OrfError::Degenerate("all accuracy draws are zero".into()));
    }
    let c = stt.value() / sqq.value();
    let mut rss = Sum::default();
    for lat in draws.draws.iter().flatten() {
        let e = lat.tau - c * lat.theta;
        rss.add(e * e);
    }
    let v = rss.value() / count as f64;
    if !(v > 0.0) {
        return Err(OrfError::Degenerate("speed draws are an exact multiple of accuracy draws".into()));
    }
    PopulationParams::new(v + c * c, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Individual, ItemSpec, LatentPair, Response};
    use approx::assert_abs_diff_eq;

    fn toy() -> (Dataset, LatentDraws) {
        let items = vec![ItemSpec { id: "i1".into(), n_words: 10 }, ItemSpec { id: "i2".into(), n_words: 6 }];
        let people = vec![
            Individual::new("a", vec![Response { item: 0, count: 7, log_time: 1.0 }, Response { item: 1, count: 2, log_time: 0.4 }]),
            Individual::new("b", vec![Response { item: 0, count: 3, log_time: 1.6 }]),
            Individual::new("c", vec![Response { item: 0, count: 9, log_time: 0.7 }, Response { item: 1, count: 5, log_time: 0.1 }]),
        ];
        let data = Dataset::new(items, people).unwrap();
        let p = |theta, tau| LatentPair { theta, tau };
        let draws = LatentDraws {
            draws: vec![
                vec![p(0.5, 0.1), p(0.9, 0.3)],
                vec![p(-0.8, -0.2), p(-0.3, -0.4)],
                vec![p(1.4, 0.2), p(1.1, 0.5)],
            ],
            items: vec![
                ItemParams::new(1.0, 0.0, 3.0, 1.0, 10).unwrap(),
                ItemParams::new(0.8, 0.5, 2.0, 0.3, 6).unwrap(),
            ],
            pop: PopulationParams::new(0.1, -0.2).unwrap(),
        };
        (data, draws)
    }

    #[test]
    fn compensated_sum() {
        let mut s = Sum::default();
        for x in [1e16, 1.0, -1e16, 1.0] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn speed_hand_values() {
        let (data, draws) = toy();
        let speed = m_step_speed(&draws, &data).unwrap();
        let t: [f64; 6] = [1.1, 1.3, 1.4, 1.2, 0.9, 1.2];
        let beta = t.iter().sum::<f64>() / 6.0;
        let var = t.iter().map(|x| (x - beta).powi(2)).sum::<f64>() / 6.0;
        assert_abs_diff_eq!(speed[0].1, beta, epsilon = 1e-14);
        assert_abs_diff_eq!(speed[0].0, 1.0 / var.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn speed_zero_residual_sentinel() {
        let (data, mut draws) = toy();
        for d in draws.draws.iter_mut() {
            for p in d.iter_mut() {
                p.tau = 0.0;
            }
        }
        let items = vec![ItemSpec { id: "i1".into(), n_words: 10 }];
        let people = (0..3).map(|k| Individual::new(format!("p{k}"), vec![Response { item: 0, count: 1, log_time: 0.3 }])).collect();
        let flat = Dataset::new(items, people).unwrap();
        let d = LatentDraws { draws: draws.draws.clone(), items: vec![draws.items[0]], pop: draws.pop };
        let speed = m_step_speed(&d, &flat).unwrap();
        assert!(speed[0].0.is_infinite());
        assert_abs_diff_eq!(speed[0].1, 0.3, epsilon = 1e-15);
        assert!(m_step_speed(&draws, &data).unwrap()[0].0.is_finite());
    }

    #[test]
    fn speed_shift_equivariance() {
        let (data, draws) = toy();
        let shifted = data.shift_log_times(2.0f64.ln());
        let a = m_step_speed(&draws, &data).unwrap();
        let b = m_step_speed(&draws, &shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(y.1 - x.1, 2.0f64.ln(), epsilon = 1e-12);
            assert_abs_diff_eq!(y.0, x.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn accuracy_symmetric_case() {
        let items = vec![ItemSpec { id: "i".into(), n_words: 8 }];
        let counts = [2, 6, 3, 5];
        let people = counts
            .iter()
            .enumerate()
            .map(|(k, &count)| Individual::new(format!("p{k}"), vec![Response { item: 0, count, log_time: 0.0 }]))
            .collect();
        let data = Dataset::new(items, people).unwrap();
        let p = |theta| LatentPair { theta, tau: 0.0 };
        let draws = LatentDraws {
            draws: vec![vec![p(-1.0)], vec![p(1.0)], vec![p(-0.5)], vec![p(0.5)]],
            items: vec![ItemParams::new(1.0, 0.7, 1.0, 0.0, 8).unwrap()],
            pop: PopulationParams::new(0.1, 0.0).unwrap(),
        };
        let step = m_step_accuracy(&draws, &data).unwrap();
        assert_abs_diff_eq!(step[0].b, 0.0, epsilon = 1e-7);
        assert!(!step[0].at_boundary);
    }

    #[test]
    fn accuracy_improves_objective() {
        let (data, draws) = toy();
        let steps = m_step_accuracy(&draws, &data).unwrap();
        let pop = draws.pop;
        let mut new_items = draws.items.clone();
        for (it, s) in new_items.iter_mut().zip(&steps) {
            it.a = s.a;
            it.b = s.b;
        }
        let before = q_hat(&draws, &data, &draws.items, &pop).unwrap();
        let after = q_hat(&draws, &data, &new_items, &pop).unwrap();
        assert!(after >= before);
    }

    #[test]
    fn covariance_regression() {
        let (_, draws) = toy();
        let pop = m_step_covariance(&draws).unwrap();
        let pts: Vec<LatentPair> = draws.draws.iter().flatten().copied().collect();
        let c = pts.iter().map(|p| p.theta * p.tau).sum::<f64>() / pts.iter().map(|p| p.theta * p.theta).sum::<f64>();
        let v = pts.iter().map(|p| (p.tau - c * p.theta).powi(2)).sum::<f64>() / 6.0;
        assert_abs_diff_eq!(pop.sigma_theta_tau, c, epsilon = 1e-14);
        assert_abs_diff_eq!(pop.sigma2_tau, v + c * c, epsilon = 1e-14);
    }

    #[test]
    fn covariance_degenerate_line() {
        let p = |theta: f64| LatentPair { theta, tau: -0.3 * theta };
        let draws = LatentDraws {
            draws: vec![vec![p(0.5), p(-1.0)], vec![p(2.0), p(0.1)]],
            items: vec![],
            pop: PopulationParams::new(0.1, 0.0).unwrap(),
        };
        assert!(matches!(m_step_covariance(&draws), Err(OrfError::Degenerate(_))));
    }
}
