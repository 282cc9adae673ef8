//! Seeded, splittable random streams.
//!
//! A stream is a `(seed, stream_id)` pair mapped onto a ChaCha20 key and
//! stream number, so sub-streams handed to individuals or replicates never
//! depend on the order in which they are consumed.

use crate::error::{OrfError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Root stream for a user-facing seed.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    /// Deterministic child stream; distinct indices give distinct streams.
    pub fn child(&self, index: u64) -> Self {
        let id = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)));
        Self::new(self.seed, id)
    }

    /// Child stream addressed by a string key (FNV-1a hash), used for
    /// per-individual streams that must not depend on record order.
    pub fn keyed(&self, key: &str) -> Self {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for byte in key.bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        self.child(h)
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

pub fn draw_std_normal(stream: RngStream, count: usize) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..count).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Lower Cholesky factor of a 2×2 symmetric positive definite matrix.
pub fn cholesky2(cov: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let [[s11, s12], [s21, s22]] = cov;
    if (s12 - s21).abs() > 1e-12 * (s12.abs() + s21.abs()).max(1.0) {
        return Err(OrfError::InvalidParameter("covariance matrix must be symmetric".into()));
    }
    let det = s11 * s22 - s12 * s12;
    if !(s11 > 0.0 && det > 0.0) {
        return Err(OrfError::InvalidParameter(format!(
            "covariance matrix is not positive definite (determinant {det})"
        )));
    }
    let l11 = s11.sqrt();
    let l21 = s12 / l11;
    let l22 = (s22 - l21 * l21).sqrt();
    Ok([[l11, 0.0], [l21, l22]])
}

pub fn draw_bivariate(
    mu: [f64; 2],
    cov: [[f64; 2]; 2],
    stream: RngStream,
    count: usize,
) -> Result<Vec<[f64; 2]>> {
    let l = cholesky2(cov)?;
    let mut rng = stream.rng();
    Ok((0..count)
        .map(|_| {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            [mu[0] + l[0][0] * z1, mu[1] + l[1][0] * z1 + l[1][1] * z2]
        })
        .collect())
}
