//! Conditional inference on a grid-supported exponential family.
//!
//! The law of θ̂ given selection is approximated by weights on an equally
//! spaced grid, `w_g(θ) ∝ exp(θx_g/σ² − x_g²/2σ²) π̂(Γx_g + W)`. Because the
//! support is fixed, the CDF at any point is monotone in θ and confidence
//! limits can be found by bisection.

use std::fmt::Write as _;

use ndarray::ArrayView2;

use crate::data::GaussianDecomposition;
use crate::dist::norm_quantile;
use crate::error::{Error, Result};
use crate::mlp::SelectionProbEstimate;

/// Log selection probabilities for row-major basis vectors.
pub trait SelectionProbability: Sync {
    fn log_prob_rows(&self, rows: &[f64], dim: usize) -> Result<Vec<f64>>;
}

impl SelectionProbability for SelectionProbEstimate {
    fn log_prob_rows(&self, rows: &[f64], dim: usize) -> Result<Vec<f64>> {
        if dim != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: dim });
        }
        self.log_predict_rows(rows)
    }
}

/// The same probability for every input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantProbability(pub f64);

impl SelectionProbability for ConstantProbability {
    fn log_prob_rows(&self, rows: &[f64], dim: usize) -> Result<Vec<f64>> {
        if !(self.0 > 0.0 && self.0 <= 1.0) {
            return Err(Error::OutOfRange(format!("constant probability {}", self.0)));
        }
        Ok(vec![self.0.ln(); rows.len() / dim.max(1)])
    }
}

/// Wraps a closure returning a probability in `[0, 1]`.
pub struct FnProbability<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> SelectionProbability for FnProbability<F> {
    fn log_prob_rows(&self, rows: &[f64], dim: usize) -> Result<Vec<f64>> {
        if dim == 0 || rows.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, got: rows.len() });
        }
        Ok(rows.chunks(dim).map(|z| (self.0)(z).clamp(0.0, 1.0).ln()).collect())
    }
}

/// Univariate inputs for a conditional law: the basis along the grid is
/// `direction · x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct LawInputs {
    pub sigma2: f64,
    pub theta_hat: f64,
    pub direction: Vec<f64>,
    pub offset: Vec<f64>,
}

impl LawInputs {
    /// Direct univariate reading of a one-parameter decomposition.
    pub fn from_decomposition(decomp: &GaussianDecomposition) -> Result<Self> {
        if decomp.s() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: decomp.s() });
        }
        Ok(Self {
            sigma2: decomp.variance(0),
            theta_hat: decomp.theta_hat[0],
            direction: decomp.gamma.column(0).to_vec(),
            offset: decomp.offset.clone(),
        })
    }

    /// Inputs when θ̂ is itself coordinate `k` of the basis and the other
    /// coordinates are independent of it, so `Γ = e_k`.
    pub fn basis_coordinate(basis: &[f64], k: usize, sigma2: f64) -> Result<Self> {
        let Some(&theta_hat) = basis.get(k) else {
            return Err(Error::OutOfRange(format!("coordinate {k} of {}", basis.len())));
        };
        let direction = (0..basis.len()).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
        let mut offset = basis.to_vec();
        offset[k] = 0.0;
        Ok(Self { sigma2, theta_hat, direction, offset })
    }

    pub fn basis_at(&self, x: f64) -> Vec<f64> {
        self.direction.iter().zip(&self.offset).map(|(g, w)| g * x + w).collect()
    }
}

/// Eliminates the other coordinates of θ̂ by conditioning on
/// `θ̂⊥ = θ̂ − Σ_{·j} θ̂_j / Σ_jj`.
pub fn nuisance_condition(
    theta_hat: &[f64],
    sigma: ArrayView2<f64>,
    j: usize,
    gamma: ArrayView2<f64>,
    offset: &[f64],
) -> Result<LawInputs> {
    let s = theta_hat.len();
    if sigma.dim() != (s, s) || gamma.ncols() != s || gamma.nrows() != offset.len() {
        return Err(Error::DimensionMismatch { expected: s, got: gamma.ncols() });
    }
    if j >= s {
        return Err(Error::OutOfRange(format!("coordinate {j} of {s}")));
    }
    let sjj = sigma[[j, j]];
    if !(sjj > 0.0) || !sjj.is_finite() {
        return Err(Error::SingularVariance);
    }
    let slope: Vec<f64> = (0..s).map(|k| sigma[[k, j]] / sjj).collect();
    let perp: Vec<f64> = theta_hat.iter().zip(&slope).map(|(t, c)| t - c * theta_hat[j]).collect();
    let direction = gamma.dot(&ndarray::ArrayView1::from(&slope)).to_vec();
    let shift = gamma.dot(&ndarray::ArrayView1::from(&perp));
    let offset = offset.iter().zip(shift.iter()).map(|(w, g)| w + g).collect();
    Ok(LawInputs { sigma2: sjj, theta_hat: theta_hat[j], direction, offset })
}

/// Convenience wrapper over [`nuisance_condition`] for a decomposition.
pub fn condition_coordinate(decomp: &GaussianDecomposition, j: usize) -> Result<LawInputs> {
    nuisance_condition(&decomp.theta_hat, decomp.sigma.view(), j, decomp.gamma.view(), &decomp.offset)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub points: usize,
    /// Half-width in standard deviations.
    pub span: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points: 100, span: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    Greater,
    Less,
    TwoSided,
}

/// A confidence interval; clipped ends sit on the search boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub lower_clipped: bool,
    pub upper_clipped: bool,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper, lower_clipped: false, upper_clipped: false }
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn clipped(&self) -> bool {
        self.lower_clipped || self.upper_clipped
    }

    /// `centre ± z_{1−α/2} · sd`.
    pub fn wald(centre: f64, sd: f64, alpha: f64) -> Self {
        let h = norm_quantile(1.0 - alpha / 2.0) * sd;
        Self::new(centre - h, centre + h)
    }
}

/// Below this every grid weight counts as zero.
const LOG_PI_FLOOR: f64 = -690.775_527_898_213_7; // ln 1e-300

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalLaw {
    pub grid: Vec<f64>,
    pub log_pi: Vec<f64>,
    pub sigma2: f64,
    pub theta_hat_obs: f64,
}

impl ConditionalLaw {
    /// Evaluates π̂ once per grid point on `θ̂ ± span·σ`.
    pub fn build(pi: &dyn SelectionProbability, inputs: &LawInputs, spec: GridSpec) -> Result<Self> {
        let sigma2 = inputs.sigma2;
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::SingularVariance);
        }
        if spec.points < 2 || !(spec.span > 0.0) {
            return Err(Error::OutOfRange(format!("grid of {} points, span {}", spec.points, spec.span)));
        }
        if inputs.direction.len() != inputs.offset.len() {
            return Err(Error::DimensionMismatch { expected: inputs.offset.len(), got: inputs.direction.len() });
        }
        let sd = sigma2.sqrt();
        let lo = inputs.theta_hat - spec.span * sd;
        let step = 2.0 * spec.span * sd / (spec.points - 1) as f64;
        let grid: Vec<f64> = (0..spec.points).map(|g| lo + g as f64 * step).collect();
        let dim = inputs.offset.len();
        let rows: Vec<f64> = grid.iter().flat_map(|&x| inputs.basis_at(x)).collect();
        let log_pi = pi.log_prob_rows(&rows, dim)?;
        Self::from_parts(grid, log_pi, sigma2, inputs.theta_hat)
    }

    pub fn from_parts(grid: Vec<f64>, log_pi: Vec<f64>, sigma2: f64, theta_hat_obs: f64) -> Result<Self> {
        if grid.len() != log_pi.len() || grid.is_empty() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: log_pi.len() });
        }
        if !grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidData("grid must be strictly increasing".into()));
        }
        if log_pi.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("log selection probability"));
        }
        if !log_pi.iter().any(|&v| v >= LOG_PI_FLOOR) {
            return Err(Error::DegenerateLaw);
        }
        Ok(Self { grid, log_pi, sigma2, theta_hat_obs })
    }

    pub fn sd(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn spacing(&self) -> f64 {
        (self.grid[self.grid.len() - 1] - self.grid[0]) / (self.grid.len() - 1) as f64
    }

    /// Log weights at parameter `theta`, up to a constant.
    pub fn log_weights(&self, theta: f64) -> Vec<f64> {
        self.grid
            .iter()
            .zip(&self.log_pi)
            .map(|(&x, &lp)| if lp < LOG_PI_FLOOR { f64::NEG_INFINITY } else { (theta * x - 0.5 * x * x) / self.sigma2 + lp })
            .collect()
    }

    /// Normalized probabilities at `theta`.
    pub fn probabilities(&self, theta: f64) -> Vec<f64> {
        let lw = self.log_weights(theta);
        let total = log_sum_exp(&lw);
        lw.iter().map(|v| (v - total).exp()).collect()
    }

    /// Mass of grid points selected by `keep`, computed in log space.
    fn mass(&self, theta: f64, keep: impl Fn(f64) -> bool) -> f64 {
        let lw = self.log_weights(theta);
        let total = log_sum_exp(&lw);
        assert!(total.is_finite(), "normalizer vanished");
        let part: Vec<f64> = lw.iter().zip(&self.grid).filter(|(_, &x)| keep(x)).map(|(&v, _)| v).collect();
        if part.is_empty() {
            return 0.0;
        }
        (log_sum_exp(&part) - total).exp().clamp(0.0, 1.0)
    }

    /// `P_θ(X ≤ x)`.
    pub fn cdf(&self, theta: f64, x: f64) -> f64 {
        if x < self.grid[0] {
            return 0.0;
        }
        if x >= self.grid[self.grid.len() - 1] {
            return 1.0;
        }
        self.mass(theta, |g| g <= x)
    }

    /// CDF with each atom spread evenly over its grid cell; continuous and
    /// piecewise linear in `x`, equal to [`cdf`](Self::cdf) at cell edges.
    pub fn smooth_cdf(&self, theta: f64, x: f64) -> f64 {
        let h = self.spacing();
        let pos = (x - self.grid[0]) / h + 0.5;
        if pos <= 0.0 {
            return 0.0;
        }
        let cell = pos.floor() as usize;
        if cell >= self.grid.len() {
            return 1.0;
        }
        let probs = self.probabilities(theta);
        let below: f64 = probs[..cell].iter().sum();
        (below + (pos - cell as f64) * probs[cell]).clamp(0.0, 1.0)
    }

    /// `P_θ(X ≥ x)`.
    pub fn upper_tail(&self, theta: f64, x: f64) -> f64 {
        if x <= self.grid[0] {
            return 1.0;
        }
        self.mass(theta, |g| g >= x)
    }

    pub fn pvalue(&self, theta0: f64, x_obs: f64, alternative: Alternative) -> f64 {
        match alternative {
            Alternative::Greater => self.upper_tail(theta0, x_obs),
            Alternative::Less => self.cdf(theta0, x_obs),
            Alternative::TwoSided => {
                (2.0 * self.upper_tail(theta0, x_obs).min(self.cdf(theta0, x_obs))).min(1.0)
            }
        }
    }

    /// Search window for confidence limits.
    fn window(&self) -> (f64, f64) {
        let w = 12.0 * self.sd();
        (self.theta_hat_obs - w, self.theta_hat_obs + w)
    }

    /// `{θ : α/2 ≤ F_θ(x_obs) ≤ 1 − α/2}` by bisection.
    pub fn invert_ci(&self, x_obs: f64, alpha: f64) -> Result<Interval> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::OutOfRange(format!("alpha {alpha}")));
        }
        let (lower, lower_clipped) = self.solve(x_obs, 1.0 - alpha / 2.0);
        let (upper, upper_clipped) = self.solve(x_obs, alpha / 2.0);
        Ok(Interval { lower, upper, lower_clipped, upper_clipped })
    }

    /// One-sided `1 − α` lower confidence bound.
    pub fn lower_bound(&self, x_obs: f64, alpha: f64) -> (f64, bool) {
        self.solve(x_obs, 1.0 - alpha)
    }

    /// θ where `F_θ(x_obs)` crosses `level`; flagged when outside the window.
    pub fn solve(&self, x_obs: f64, level: f64) -> (f64, bool) {
        let (lo, hi) = self.window();
        match bisect_decreasing(|t| self.cdf(t, x_obs), level, lo, hi, 1e-6 * self.sd()) {
            Crossing::Inside(t) => (t, false),
            Crossing::BelowRange => (lo, true),
            Crossing::AboveRange => (hi, true),
        }
    }

    /// Flat text form: σ², observed θ̂, then one `x log_pi` pair per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("sigma2 {:.16e}\ntheta_hat {:.16e}\n", self.sigma2, self.theta_hat_obs);
        for (x, lp) in self.grid.iter().zip(&self.log_pi) {
            let _ = writeln!(s, "{x:.16e} {lp:.16e}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |d: String| Error::Parse { what: "conditional law", detail: d };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut header = |key: &str| -> Result<f64> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {key}")))?;
            let rest = line.strip_prefix(key).ok_or_else(|| bad(format!("expected {key}")))?;
            rest.trim().parse::<f64>().map_err(|e| bad(e.to_string()))
        };
        let sigma2 = header("sigma2")?;
        let theta_hat = header("theta_hat")?;
        let mut grid = Vec::new();
        let mut log_pi = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let (Some(x), Some(lp), None) = (it.next(), it.next(), it.next()) else {
                return Err(bad(format!("bad grid line {line:?}")));
            };
            grid.push(x.parse::<f64>().map_err(|e| bad(e.to_string()))?);
            log_pi.push(lp.parse::<f64>().map_err(|e| bad(e.to_string()))?);
        }
        Self::from_parts(grid, log_pi, sigma2, theta_hat)
    }
}

/// Builds the law for inputs and a selection-probability estimate.
pub fn build_law(pi: &dyn SelectionProbability, inputs: &LawInputs, spec: GridSpec) -> Result<ConditionalLaw> {
    ConditionalLaw::build(pi, inputs, spec)
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Crossing {
    Inside(f64),
    /// The function is already below the level at the left end.
    BelowRange,
    /// The function is still above the level at the right end.
    AboveRange,
}

/// Root of `f(t) = level` for non-increasing `f` on `[lo, hi]`.
pub(crate) fn bisect_decreasing(f: impl Fn(f64) -> f64, level: f64, mut lo: f64, mut hi: f64, tol: f64) -> Crossing {
    if f(lo) < level {
        return Crossing::BelowRange;
    }
    if f(hi) > level {
        return Crossing::AboveRange;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Crossing::Inside(0.5 * (lo + hi))
}
