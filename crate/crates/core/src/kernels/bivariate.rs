//! Standard bivariate normal distribution function.
//!
//! Follows Genz's refinement of the Drezner–Wesolowsky reduction: the
//! probability is written as a one-dimensional integral over the correlation
//! (in arcsine coordinates for moderate |ρ|, and in a series-corrected form
//! for |ρ| ≥ 0.925) and evaluated with fixed Gauss–Legendre rules.

use super::normal::normal_cdf;
use crate::error::{OrfError, Result};
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

/// Correlation coefficient restricted to the open interval (-1, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Correlation(f64);

impl Correlation {
    pub fn new(rho: f64) -> Result<Self> {
        if rho.is_finite() && rho.abs() < 1.0 {
            Ok(Self(rho))
        } else {
            Err(OrfError::InvalidParameter(format!(
                "correlation must lie in (-1, 1), got {rho}"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Correlation {
    type Error = OrfError;

    fn try_from(rho: f64) -> Result<Self> {
        Self::new(rho)
    }
}

// Half Gauss–Legendre rules on [-1, 1]: (weight, negative abscissa).
const GL6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
    (0.467_913_934_572_690_4, -0.238_619_186_083_197_0),
];

const GL12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_77, -0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, -0.904_117_256_370_475_0),
    (0.160_078_328_543_346_4, -0.769_902_674_194_305_0),
    (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
];

const GL20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, -0.912_234_428_251_325_9),
    (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515_0),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
];

fn rule_for(abs_rho: f64) -> &'static [(f64, f64)] {
    if abs_rho < 0.3 {
        &GL6
    } else if abs_rho < 0.75 {
        &GL12
    } else {
        &GL20
    }
}

/// `P(Z1 <= x, Z2 <= y)` for a standard bivariate normal pair with
/// correlation `rho`.
pub fn bvn_cdf(x: f64, y: f64, rho: Correlation) -> f64 {
    upper_orthant(-x, -y, rho.value()).clamp(0.0, 1.0)
}

/// `P(Z1 > h, Z2 > k)`.
fn upper_orthant(h: f64, k: f64, r: f64) -> f64 {
    let rule = rule_for(r.abs());
    let mut hk = h * k;

    if r.abs() < 0.925 {
        let mut sum = 0.0;
        if r != 0.0 {
            let hs = 0.5 * (h * h + k * k);
            let asr = r.asin();
            for &(w, x) in rule {
                for sign in [1.0, -1.0] {
                    let sn = (0.5 * asr * (sign * x + 1.0)).sin();
                    sum += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            sum *= asr / (2.0 * TWO_PI);
        }
        return sum + normal_cdf(-h) * normal_cdf(-k);
    }

    let mut k = k;
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    let a_sq = (1.0 - r) * (1.0 + r);
    let mut a = a_sq.sqrt();
    let b_sq = (h - k) * (h - k);
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 16.0;
    let mut bvn = a
        * (-0.5 * (b_sq / a_sq + hk)).exp()
        * (1.0 - c * (b_sq - a_sq) * (1.0 - d * b_sq / 5.0) / 3.0 + c * d * a_sq * a_sq / 5.0);
    if hk > -160.0 {
        let b = b_sq.sqrt();
        bvn -= (-0.5 * hk).exp()
            * TWO_PI.sqrt()
            * normal_cdf(-b / a)
            * b
            * (1.0 - c * b_sq * (1.0 - d * b_sq / 5.0) / 3.0);
    }
    a *= 0.5;
    for &(w, x) in rule {
        for sign in [1.0, -1.0] {
            let xs = (a * (sign * x + 1.0)).powi(2);
            let rs = (1.0 - xs).sqrt();
            let expo = -0.5 * (b_sq / xs + hk);
            if expo > -700.0 {
                bvn += a
                    * w
                    * expo.exp()
                    * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                        - (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
    }
    bvn = -bvn / TWO_PI;

    if r > 0.0 {
        bvn + normal_cdf(-h.max(k))
    } else {
        let mut out = -bvn;
        if k > h {
            if h < 0.0 {
                out += normal_cdf(k) - normal_cdf(h);
            } else {
                out += normal_cdf(-h) - normal_cdf(-k);
            }
        }
        out
    }
}
