use super::posterior::{build_envelope_from, draw_tau, sample_theta};
use crate::error::Result;
use crate::kernels::RngStream;
use crate::model::conditional::TimeEvidence;
use crate::model::{Dataset, Individual, ItemParams, LatentPair, PopulationParams};
use rayon::prelude::*;

/// Posterior draws for every individual, with the parameters they were drawn under.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDraws {
    pub draws: Vec<Vec<LatentPair>>,
    pub items: Vec<ItemParams>,
    pub pop: PopulationParams,
}

impl LatentDraws {
    pub fn m(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    /// Per-individual averages of θ and τ.
    pub fn means(&self) -> Vec<LatentPair> {
        self.draws
            .iter()
            .map(|d| {
                let m = d.len() as f64;
                LatentPair {
                    theta: d.iter().map(|p| p.theta).sum::<f64>() / m,
                    tau: d.iter().map(|p| p.tau).sum::<f64>() / m,
                }
            })
            .collect()
    }
}

/// `m` joint posterior draws for one individual from its own stream.
pub fn draw_individual(
    record: &Individual,
    items: &[ItemParams],
    pop: &PopulationParams,
    m: usize,
    stream: RngStream,
    max_attempts: u64,
) -> Result<Vec<LatentPair>> {
    let evidence = TimeEvidence::from_record(record, items);
    let envelope = build_envelope_from(record, items, pop, &evidence);
    let mut rng = stream.rng();
    (0..m)
        .map(|_| {
            let theta = sample_theta(record, &envelope, items, &mut rng, max_attempts)?;
            let tau = draw_tau(theta, &evidence, pop, &mut rng);
            Ok(LatentPair { theta, tau })
        })
        .collect()
}

/// Draws `m` latent pairs per individual. Each individual uses the child
/// stream keyed by its id, so results do not depend on record order or on
/// thread scheduling.
pub fn e_step(
    data: &Dataset,
    items: &[ItemParams],
    pop: &PopulationParams,
    m: usize,
    stream: RngStream,
    max_attempts: u64,
) -> Result<LatentDraws> {
    crate::model::likelihood::check_items(data, items)?;
    pop.validate()?;
    let draws = data
        .individuals()
        .par_iter()
        .map(|rec| draw_individual(rec, items, pop, m, stream.keyed(&rec.id), max_attempts))
        .collect::<Result<Vec<_>>>()?;
    Ok(LatentDraws { draws, items: items.to_vec(), pop: *pop })
}
