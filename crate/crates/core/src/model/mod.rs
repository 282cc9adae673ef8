//! Model definition: parameter and data types, closed-form moments, the
//! conjugate latent algebra and the log-likelihoods.

pub mod conditional;
pub mod data;
pub mod likelihood;
pub mod moments;
pub mod params;

pub use data::{Dataset, Individual, ItemSpec, Response};
pub use likelihood::{
    complete_loglik, complete_loglik_individual, latent_log_density, log_time_density, observed_loglik,
    observed_loglik_individual,
};
pub use moments::{
    cov_count_logtime, cov_logtime_pair, mean_count, mean_logtime, mean_time, success_prob, var_count,
    var_logtime, var_time,
};
pub use params::{ItemParams, LatentPair, PopulationParams};
