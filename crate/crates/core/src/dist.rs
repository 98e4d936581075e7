//! Normal and Student-t distribution functions used throughout the crate.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use libm::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Beyond this |z| the normal tail is evaluated through the Mills ratio.
const TAIL_SWITCH: f64 = 8.0;

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub fn norm_log_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Mills ratio `Q(z)/φ(z)` for large positive `z`, by continued fraction.
fn mills_ratio(z: f64) -> f64 {
    let mut f = z;
    for k in (1..=120).rev() {
        f = z + k as f64 / f;
    }
    1.0 / f
}

/// `log(1 − Φ(z))`, accurate far into the upper tail.
pub fn norm_log_sf(z: f64) -> f64 {
    if z > TAIL_SWITCH {
        norm_log_pdf(z) + mills_ratio(z).ln()
    } else if z < -TAIL_SWITCH {
        (-norm_sf(-z)).ln_1p()
    } else {
        (0.5 * erfc(z / std::f64::consts::SQRT_2)).ln()
    }
}

/// `1 − Φ(z)`.
pub fn norm_sf(z: f64) -> f64 {
    if z > TAIL_SWITCH {
        norm_log_sf(z).exp()
    } else if z.is_infinite() && z < 0.0 {
        1.0
    } else {
        0.5 * erfc(z / std::f64::consts::SQRT_2)
    }
}

/// `Φ(z)`.
pub fn norm_cdf(z: f64) -> f64 {
    norm_sf(-z)
}

/// `log Φ(z)`.
pub fn norm_log_cdf(z: f64) -> f64 {
    norm_log_sf(-z)
}

pub fn norm_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.cdf(-t.abs())).min(1.0)
}

pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom").inverse_cdf(p)
}
