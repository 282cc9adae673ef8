use crate::error::{OrfError, Result};

/// Per-item parameters of the probit-binomial accuracy part and the
/// log-normal time part.
///
/// `alpha` may be `f64::INFINITY`, meaning the item's log-time carries no
/// residual noise beyond the speed trait.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemParams {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n_words: u32,
}

impl ItemParams {
    pub fn new(a: f64, b: f64, alpha: f64, beta: f64, n_words: u32) -> Result<Self> {
        let item = Self { a, b, alpha, beta, n_words };
        item.validate()?;
        Ok(item)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(OrfError::InvalidParameter(format!("a must be positive, got {}", self.a)));
        }
        if !self.b.is_finite() {
            return Err(OrfError::InvalidParameter(format!("b must be finite, got {}", self.b)));
        }
        if !(self.alpha > 0.0) {
            return Err(OrfError::InvalidParameter(format!(
                "alpha must be positive or infinite, got {}",
                self.alpha
            )));
        }
        if !self.beta.is_finite() {
            return Err(OrfError::InvalidParameter(format!("beta must be finite, got {}", self.beta)));
        }
        if self.n_words == 0 {
            return Err(OrfError::InvalidParameter("item must contain at least one word".into()));
        }
        Ok(())
    }

    pub fn alpha_is_infinite(&self) -> bool {
        self.alpha.is_infinite()
    }

    /// Residual log-time variance `1/α²` (zero for the infinite sentinel).
    pub fn residual_var(&self) -> f64 {
        if self.alpha.is_infinite() {
            0.0
        } else {
            1.0 / (self.alpha * self.alpha)
        }
    }

    /// Probit argument of the marginal success probability, `-ab/√(1+a²)`.
    pub fn marginal_probit(&self) -> f64 {
        -self.a * self.b / (1.0 + self.a * self.a).sqrt()
    }

    /// Correlation `a²/(1+a²)` appearing in the count variance.
    pub fn count_rho(&self) -> f64 {
        let a2 = self.a * self.a;
        a2 / (1.0 + a2)
    }
}

/// Free parameters of the latent covariance. The accuracy trait has unit
/// variance and both traits have mean zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationParams {
    pub sigma2_tau: f64,
    pub sigma_theta_tau: f64,
}

impl PopulationParams {
    pub fn new(sigma2_tau: f64, sigma_theta_tau: f64) -> Result<Self> {
        let pop = Self { sigma2_tau, sigma_theta_tau };
        pop.validate()?;
        Ok(pop)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_tau.is_finite() && self.sigma_theta_tau.is_finite())
            || self.sigma2_tau <= 0.0
            || self.residual_var() <= 0.0
        {
            return Err(OrfError::NotPositiveDefinite {
                sigma2_tau: self.sigma2_tau,
                sigma_theta_tau: self.sigma_theta_tau,
            });
        }
        Ok(())
    }

    /// `Var(τ | θ) = σ_τ² − σ_θτ²`.
    pub fn residual_var(&self) -> f64 {
        self.sigma2_tau - self.sigma_theta_tau * self.sigma_theta_tau
    }

    pub fn correlation(&self) -> f64 {
        self.sigma_theta_tau / self.sigma2_tau.sqrt()
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        [[1.0, self.sigma_theta_tau], [self.sigma_theta_tau, self.sigma2_tau]]
    }
}

/// A realized or sampled pair of latent traits.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatentPair {
    pub theta: f64,
    pub tau: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn item_validation() {
        assert!(ItemParams::new(1.0, 0.0, 5.0, 0.0, 10).is_ok());
        assert!(ItemParams::new(1.0, 0.0, f64::INFINITY, 0.0, 10).is_ok());
        assert!(ItemParams::new(0.0, 0.0, 5.0, 0.0, 10).is_err());
        assert!(ItemParams::new(1.0, 0.0, -1.0, 0.0, 10).is_err());
        assert!(ItemParams::new(1.0, 0.0, 1.0, 0.0, 0).is_err());
        assert!(ItemParams::new(1.0, f64::NAN, 1.0, 0.0, 3).is_err());
    }

    #[test]
    fn population_validation() {
        let pop = PopulationParams::new(0.24155_f64.powi(2), -0.18116).unwrap();
        assert!((pop.correlation() + 0.75).abs() < 1e-4);
        assert!(PopulationParams::new(0.04, 0.2).is_err());
        assert!(PopulationParams::new(0.04, 0.21).is_err());
        assert!(PopulationParams::new(-0.04, 0.0).is_err());
    }

    #[test]
    fn infinite_alpha_has_zero_residual() {
        let item = ItemParams::new(1.0, 0.0, f64::INFINITY, 0.0, 10).unwrap();
        assert_eq!(item.residual_var(), 0.0);
        assert!(item.alpha_is_infinite());
    }
}
