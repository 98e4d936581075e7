//! Closed-form drop-the-losers laws used as ground truth.
//!
//! With unit-variance observations, `n₁` per arm in the first stage and `n₂`
//! for the winner in the second, the pooled winner mean θ̂ given selection is
//! a truncated normal. Integrating out the first-stage excess over θ̂ turns
//! the hard truncation into a smooth Φ factor.

use crate::dist::{norm_cdf, norm_log_cdf, norm_log_pdf, norm_log_sf, norm_quantile};
use crate::error::{Error, Result};
use crate::inference::{bisect_decreasing, Crossing, Interval};
use crate::select::{dtl_select, ModelId};

/// Below this the truncated law has no usable support.
const MIN_DENOMINATOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtlInstance {
    pub n1: usize,
    pub n2: usize,
    pub winner: usize,
    /// `1/(n₁ + n₂)`.
    pub sigma2: f64,
    /// `1/n₁ − 1/(n₁ + n₂)`.
    pub s2: f64,
    /// Best first-stage mean among the losers.
    pub a: f64,
    pub theta_hat: f64,
    /// `a − b` with `b = X̄_{k*} − θ̂`.
    pub threshold: f64,
}

impl DtlInstance {
    pub fn new(first_means: &[f64], second_mean: f64, n1: usize, n2: usize) -> Result<Self> {
        if first_means.len() < 2 {
            return Err(Error::InvalidData("need at least two arms".into()));
        }
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidData("empty stage".into()));
        }
        if !second_mean.is_finite() {
            return Err(Error::NonFinite("second-stage mean"));
        }
        let ModelId::Winner(k) = dtl_select(first_means)? else { unreachable!() };
        let (f1, f2) = (n1 as f64, n2 as f64);
        let a = first_means.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &m)| m).fold(f64::NEG_INFINITY, f64::max);
        let theta_hat = (f1 * first_means[k] + f2 * second_mean) / (f1 + f2);
        let b = first_means[k] - theta_hat;
        Ok(Self {
            n1,
            n2,
            winner: k,
            sigma2: 1.0 / (f1 + f2),
            s2: 1.0 / f1 - 1.0 / (f1 + f2),
            a,
            theta_hat,
            threshold: a - b,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn s(&self) -> f64 {
        self.s2.sqrt()
    }

    /// `√(σ² + s²)`, the sd of the first-stage winner mean.
    pub fn tau(&self) -> f64 {
        (self.sigma2 + self.s2).sqrt()
    }
}

/// `log(Q(u) − Q(v))` for `u ≤ v`, where `Q` is the normal survival function.
fn log_sf_diff(u: f64, v: f64) -> f64 {
    if v <= u {
        return f64::NEG_INFINITY;
    }
    if u > 0.0 {
        let (lu, lv) = (norm_log_sf(u), norm_log_sf(v));
        lu + (-(lv - lu).exp()).ln_1p()
    } else {
        let (lu, lv) = (norm_log_cdf(v), norm_log_cdf(u));
        lu + (-(lv - lu).exp()).ln_1p()
    }
}

/// CDF at `x` of `N(θ, σ²)` truncated to `[lower, ∞)`.
pub fn tn_cdf(theta: f64, sigma: f64, lower: f64, x: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::OutOfRange(format!("sigma {sigma}")));
    }
    if x <= lower {
        return Ok(0.0);
    }
    let alpha = (lower - theta) / sigma;
    let z = (x - theta) / sigma;
    let log_den = norm_log_sf(alpha);
    if log_den < MIN_DENOMINATOR.ln() {
        return Err(Error::TruncationBeyondSupport);
    }
    Ok((log_sf_diff(alpha, z) - log_den).exp().clamp(0.0, 1.0))
}

/// `1 − tn_cdf`, without cancellation in the upper tail.
pub fn tn_sf(theta: f64, sigma: f64, lower: f64, x: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::OutOfRange(format!("sigma {sigma}")));
    }
    if x <= lower {
        return Ok(1.0);
    }
    let log_den = norm_log_sf((lower - theta) / sigma);
    if log_den < MIN_DENOMINATOR.ln() {
        return Err(Error::TruncationBeyondSupport);
    }
    Ok((norm_log_sf((x - theta) / sigma) - log_den).exp().clamp(0.0, 1.0))
}

/// One-sided upper-tail p-value for `θ_{k*} = θ₀`.
pub fn tn_pvalue(inst: &DtlInstance, theta0: f64) -> Result<f64> {
    tn_sf(theta0, inst.sigma(), inst.threshold, inst.theta_hat)
}

/// Equal-tailed interval; an end that cannot be bracketed is infinite.
pub fn tn_ci(inst: &DtlInstance, alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    let sd = inst.sigma();
    let cdf = |t: f64| tn_cdf(t, sd, inst.threshold, inst.theta_hat).unwrap_or(1.0);
    let window = 35.0 * sd;
    let tol = 1e-8 * sd;
    let (lo, hi) = (inst.theta_hat - window, inst.theta_hat + window);
    let lower = endpoint(bisect_decreasing(cdf, 1.0 - alpha / 2.0, lo, hi, tol));
    let upper = endpoint(bisect_decreasing(cdf, alpha / 2.0, lo, hi, tol));
    Ok(Interval { lower, upper, lower_clipped: lower.is_infinite(), upper_clipped: upper.is_infinite() })
}

fn endpoint(c: Crossing) -> f64 {
    match c {
        Crossing::Inside(t) => t,
        Crossing::BelowRange => f64::NEG_INFINITY,
        Crossing::AboveRange => f64::INFINITY,
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("alpha {alpha}")))
    }
}

/// Marginal selection probability `Φ((x − a)/s)`.
pub fn marginal_pi(inst: &DtlInstance, x: f64) -> f64 {
    norm_cdf((x - inst.a) / inst.s())
}

/// Log of the normalized marginal density at `t`.
fn marginal_log_density(inst: &DtlInstance, theta: f64, log_den: f64, t: f64) -> f64 {
    let sd = inst.sigma();
    norm_log_pdf((t - theta) / sd) - sd.ln() + norm_log_cdf((t - inst.a) / inst.s()) - log_den
}

/// Mode of the (log-concave) marginal density.
fn marginal_mode(inst: &DtlInstance, theta: f64) -> f64 {
    let (s2, s) = (inst.sigma2, inst.s());
    // derivative of the log density; decreasing in t
    let slope = |t: f64| {
        let u = (t - inst.a) / s;
        let hazard = (norm_log_pdf(u) - norm_log_cdf(u)).exp();
        -(t - theta) / s2 + hazard / s
    };
    let mut lo = theta;
    let mut hi = theta.max(inst.a) + s2 / s + inst.sigma();
    while slope(hi) > 0.0 {
        hi += hi - lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * inst.sigma() {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 40)
}

/// CDF at `x` of the marginalized law of θ̂ given selection, at `θ_{k*} = theta`.
///
/// The density `φ(x; θ, σ²) Φ((x − a)/s)` is integrated from
/// `θ − 12√(σ² + s²)`, skipping stretches where the log-concave density is
/// negligible. Panels of half a standard deviation keep Simpson's rule from
/// stepping over the mass.
pub fn marginal_cdf(inst: &DtlInstance, theta: f64, x: f64) -> Result<f64> {
    let tau = inst.tau();
    let log_den = norm_log_sf((inst.a - theta) / tau);
    if !log_den.is_finite() {
        return Err(Error::TruncationBeyondSupport);
    }
    let sd = inst.sigma();
    let mode = marginal_mode(inst, theta);
    let start = (theta - 12.0 * tau).max(mode - 14.0 * sd);
    let end = x.min(mode + 14.0 * sd);
    if end <= start {
        return Ok(0.0);
    }
    let density = |t: f64| marginal_log_density(inst, theta, log_den, t).exp();
    let panels = ((end - start) / (0.5 * sd)).ceil().max(1.0) as usize;
    let width = (end - start) / panels as f64;
    let tol = 1e-11 / panels as f64;
    let total: f64 = (0..panels)
        .map(|i| {
            let a = start + i as f64 * width;
            adaptive_simpson(density, a, a + width, tol)
        })
        .sum();
    Ok(total.clamp(0.0, 1.0))
}

/// Search window for marginal confidence limits.
fn marginal_window(inst: &DtlInstance) -> (f64, f64) {
    let w = 60.0 * inst.tau();
    (inst.theta_hat - w, inst.theta_hat + w)
}

fn marginal_solve(inst: &DtlInstance, level: f64) -> f64 {
    let (lo, hi) = marginal_window(inst);
    let cdf = |t: f64| marginal_cdf(inst, t, inst.theta_hat).unwrap_or(1.0);
    endpoint(bisect_decreasing(cdf, level, lo, hi, 1e-8 * inst.sigma()))
}

/// Equal-tailed interval from the marginalized law.
pub fn marginal_ci(inst: &DtlInstance, alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    let lower = marginal_solve(inst, 1.0 - alpha / 2.0);
    let upper = marginal_solve(inst, alpha / 2.0);
    Ok(Interval { lower, upper, lower_clipped: lower.is_infinite(), upper_clipped: upper.is_infinite() })
}

/// One-sided `1 − α` lower bound and the median-unbiased estimate.
pub fn marginal_lower_bound(inst: &DtlInstance, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    Ok((marginal_solve(inst, 1.0 - alpha), marginal_solve(inst, 0.5)))
}

/// The first-stage-free Wald interval for the second stage alone.
pub fn splitting_interval(second_mean: f64, n2: usize, alpha: f64) -> Interval {
    Interval::wald(second_mean, 1.0 / (n2 as f64).sqrt(), alpha)
}

/// `Φ⁻¹(1 − α)/√n₂`, the bound on the mean one-sided marginal length.
pub fn one_sided_length_bound(n2: usize, alpha: f64) -> f64 {
    norm_quantile(1.0 - alpha) / (n2 as f64).sqrt()
}
