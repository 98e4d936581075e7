//! Lasso by cyclic coordinate descent, and data carving on top of it.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{RandomSeed, Rng};

use super::{ModelId, SelectionAux, Selector, SelectorOutput};

#[derive(Debug, Clone, Copy)]
pub struct LassoOptions {
    /// Stop once the largest coordinate change in a sweep is below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_sweeps: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub beta: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Minimizes `(1/2n)‖y − Xβ‖² + λ‖β‖₁` with default options.
pub fn lasso_cd(x: ArrayView2<f64>, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    Ok(lasso_cd_with(x, y, lambda, LassoOptions::default())?.beta)
}

pub fn lasso_cd_with(x: ArrayView2<f64>, y: &[f64], lambda: f64, opts: LassoOptions) -> Result<LassoFit> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::OutOfRange(format!("lasso penalty must be positive, got {lambda}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lasso inputs"));
    }
    let nf = n as f64;
    let gram = x.t().dot(&x) / nf;
    let corr = x.t().dot(&Array1::from(y.to_vec())) / nf;
    Ok(cd_on_gram(&gram, corr.as_slice().unwrap(), lambda, opts))
}

fn cd_on_gram(gram: &Array2<f64>, corr: &[f64], lambda: f64, opts: LassoOptions) -> LassoFit {
    let p = corr.len();
    let mut beta = vec![0.0; p];
    // q = Gβ
    let mut q = vec![0.0; p];
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            let gjj = gram[[j, j]];
            let new = if gjj > 0.0 {
                let r = corr[j] - q[j] + gjj * beta[j];
                soft_threshold(r, lambda) / gjj
            } else {
                0.0
            };
            let delta = new - beta[j];
            if delta != 0.0 {
                beta[j] = new;
                for (qk, g) in q.iter_mut().zip(gram.row(j)) {
                    *qk += delta * g;
                }
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < opts.tol {
            converged = true;
            break;
        }
    }
    LassoFit { beta, sweeps, converged }
}

/// Lasso on a random subset of rows ("data carving").
///
/// The subset of `⌊frac·n⌋` rows is drawn from ω. Columns are scaled to unit
/// sample standard deviation on the subset before the lasso; the basis is
/// the raw `X₁ᵀY₁ / n₁`, and θ̂ is the least-squares fit of `y` on the
/// selected columns over all rows.
#[derive(Debug, Clone, Copy)]
pub struct CarveSelector {
    pub frac: f64,
    pub lambda: f64,
}

impl CarveSelector {
    pub fn new(lambda: f64) -> Self {
        Self { frac: 0.8, lambda }
    }
}

impl Selector for CarveSelector {
    fn run(&self, data: &Dataset, target: Option<&ModelId>, omega: &mut Rng) -> Result<SelectorOutput> {
        let Dataset::Regression { x, y } = data else {
            return Err(Error::InvalidData("data carving needs regression data".into()));
        };
        let n = y.len();
        let n1 = (self.frac * n as f64).floor() as usize;
        if n1 < 2 || n1 > n {
            return Err(Error::OutOfRange(format!("carving fraction {} leaves {n1} rows", self.frac)));
        }
        let mut subset = index::sample(omega, n, n1).into_vec();
        subset.sort_unstable();
        let x1 = x.select(Axis(0), &subset);
        let y1: Vec<f64> = subset.iter().map(|&i| y[i]).collect();
        let y1a = Array1::from(y1);
        let basis = (x1.t().dot(&y1a) / n1 as f64).to_vec();

        let mut scaled = x1;
        for mut col in scaled.axis_iter_mut(Axis(1)) {
            let m = col.mean().unwrap_or(0.0);
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n1 as f64 - 1.0);
            let sd = var.sqrt();
            if sd > 0.0 {
                col.mapv_inplace(|v| v / sd);
            } else {
                col.fill(0.0);
            }
        }
        let beta = lasso_cd(scaled.view(), y1a.as_slice().unwrap(), self.lambda)?;
        let model = ModelId::support(beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect());
        let support = match target {
            None if model.is_empty() => return Err(Error::NothingSelected("lasso support is empty")),
            None => match &model {
                ModelId::Support(s) => s.clone(),
                _ => unreachable!(),
            },
            Some(ModelId::Support(s)) if !s.is_empty() && s.iter().all(|&j| j < x.ncols()) => s.clone(),
            Some(other) => return Err(Error::Mismatch(format!("{other:?} is not a usable support"))),
        };
        let (theta_hat, _) = linalg::ols(x.view(), y, &support)?;
        let d = basis.len();
        Ok(SelectorOutput { model, basis, v_hat: vec![0.0; d], theta_hat, aux: SelectionAux::Carve { subset } })
    }
}

pub fn carve_select(data: &Dataset, frac: f64, lambda: f64, seed: &RandomSeed) -> Result<SelectorOutput> {
    CarveSelector { frac, lambda }.run(data, None, &mut seed.rng())
}
