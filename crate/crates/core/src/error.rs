use thiserror::Error;

/// Errors raised by the estimation and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrfError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("latent covariance is not positive definite (sigma2_tau={sigma2_tau}, sigma_theta_tau={sigma_theta_tau})")]
    NotPositiveDefinite { sigma2_tau: f64, sigma_theta_tau: f64 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rejection sampler exhausted {attempts} attempts")]
    RejectionOverflow { attempts: u64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(String),
}

impl OrfError {
    /// Whether the error comes from malformed input or parameters.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            OrfError::Domain(_) | OrfError::InvalidParameter(_) | OrfError::InvalidData(_) | OrfError::InsufficientData(_)
        )
    }

    /// Whether the error comes from numerics rather than input validation.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            OrfError::RejectionOverflow { .. }
                | OrfError::NoConvergence(_)
                | OrfError::Degenerate(_)
                | OrfError::NotPositiveDefinite { .. }
        )
    }
}

impl From<std::io::Error> for OrfError {
    fn from(e: std::io::Error) -> Self {
        OrfError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, OrfError>;
