use crate::model::{ItemParams, PopulationParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Mom,
    Mcem,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mom => "mom",
            Method::Mcem => "mcem",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mom" => Ok(Method::Mom),
            "mcem" => Ok(Method::Mcem),
            other => Err(format!("unknown method {other}; expected mom or mcem")),
        }
    }
}

/// One MCEM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub draws: usize,
    pub items: Vec<ItemParams>,
    pub pop: PopulationParams,
    /// Observed-data log-likelihood at the updated parameters.
    pub observed_loglik: f64,
    /// Monte Carlo objective on this iteration's draws, before and after the M-step.
    pub q_before: f64,
    pub q_after: f64,
    /// Monte Carlo standard error of `q_after - q_before`.
    pub ascent_se: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub flags: Vec<String>,
    pub trace: Vec<TraceRow>,
    pub observed_loglik: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: Method,
    pub item_ids: Vec<String>,
    pub items: Vec<ItemParams>,
    pub pop: PopulationParams,
    pub diagnostics: Diagnostics,
}

impl FitResult {
    pub fn validate(&self) -> crate::Result<()> {
        for item in &self.items {
            item.validate()?;
        }
        self.pop.validate()
    }
}
