//! Univariate standard normal density, distribution and quantile functions.

use crate::error::{OrfError, Result};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Lower clamp applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, evaluated through `erfc` so that
/// both tails keep full relative precision.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// `ln Φ(x)` with the probability clamped at [`PROB_FLOOR`].
#[inline]
pub fn log_normal_cdf(x: f64) -> f64 {
    normal_cdf(x).max(PROB_FLOOR).ln()
}

/// Inverse Mills ratio `φ(x)/Φ(x)`, i.e. the derivative of `ln Φ(x)`.
pub fn inv_mills(x: f64) -> f64 {
    if x > -35.0 {
        normal_pdf(x) / normal_cdf(x)
    } else {
        // asymptotic expansion of Φ(x)/φ(x) for large negative x
        let z = 1.0 / (x * x);
        -x / (1.0 - z * (1.0 - 3.0 * z * (1.0 - 5.0 * z)))
    }
}

/// Standard normal quantile.
///
/// Acklam's rational approximation, polished by two Newton steps. Upper-half
/// probabilities are reflected so that the Newton residual is always taken in
/// the lower tail where `Φ` has full relative precision.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(OrfError::Domain(format!(
            "normal quantile requires p in (0, 1), got {p}"
        )));
    }
    if p > 0.5 {
        // 1 - p is exact for p in [0.5, 1]
        return Ok(-lower_quantile(1.0 - p));
    }
    Ok(lower_quantile(p))
}

fn lower_quantile(p: f64) -> f64 {
    let mut x = acklam(p);
    for _ in 0..2 {
        let dens = normal_pdf(x);
        if dens <= 0.0 {
            break;
        }
        x -= (normal_cdf(x) - p) / dens;
    }
    x
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}
