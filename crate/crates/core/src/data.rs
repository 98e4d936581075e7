//! Datasets, bootstrap resampling, moment estimation and the Gaussian
//! decomposition `Z̃ = Γθ̂ + W`.

use ndarray::{Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::RandomSeed;

/// Extra observations collected for a single group after selection
/// (the second stage of a drop-the-losers trial).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Followup {
    pub group: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    /// `K` groups of scalar observations, optionally with follow-up data for one group.
    Grouped { groups: Vec<Vec<f64>>, followup: Option<Followup> },
    /// Design matrix (`n × p`) and response (`n`).
    Regression { x: Array2<f64>, y: Vec<f64> },
    /// Two arms observed in blocks; block `t` of each arm is stage `t`.
    StagedTwoSample { arm_a: Vec<Vec<f64>>, arm_b: Vec<Vec<f64>> },
}

impl Dataset {
    pub fn grouped(groups: Vec<Vec<f64>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidData("no groups".into()));
        }
        if let Some(k) = groups.iter().position(|g| g.is_empty()) {
            return Err(Error::InvalidData(format!("group {k} is empty")));
        }
        check_finite(groups.iter().flatten())?;
        Ok(Dataset::Grouped { groups, followup: None })
    }

    /// Attaches follow-up observations for `group`. An empty list is allowed.
    pub fn with_followup(self, group: usize, values: Vec<f64>) -> Result<Self> {
        match self {
            Dataset::Grouped { groups, .. } => {
                if group >= groups.len() {
                    return Err(Error::InvalidData(format!("follow-up group {group} out of range")));
                }
                check_finite(values.iter())?;
                Ok(Dataset::Grouped { groups, followup: Some(Followup { group, values }) })
            }
            _ => Err(Error::InvalidData("follow-up data only applies to grouped datasets".into())),
        }
    }

    pub fn regression(x: Array2<f64>, y: Vec<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::InvalidData(format!(
                "design has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidData("empty design".into()));
        }
        check_finite(x.iter().chain(y.iter()))?;
        Ok(Dataset::Regression { x, y })
    }

    pub fn staged(arm_a: Vec<Vec<f64>>, arm_b: Vec<Vec<f64>>) -> Result<Self> {
        if arm_a.is_empty() || arm_a.len() != arm_b.len() {
            return Err(Error::InvalidData("arms must have the same positive number of stages".into()));
        }
        if arm_a.iter().chain(arm_b.iter()).any(|b| b.is_empty()) {
            return Err(Error::InvalidData("stage blocks must be non-empty".into()));
        }
        check_finite(arm_a.iter().chain(arm_b.iter()).flatten())?;
        Ok(Dataset::StagedTwoSample { arm_a, arm_b })
    }

    /// Bootstrap resample: i.i.d. draws with replacement within each stratum.
    ///
    /// Grouped data is resampled per group (and the follow-up block on its
    /// own), regression data by joint `(x, y)` rows, staged data per stage
    /// and arm.
    pub fn resample(&self, seed: &RandomSeed) -> Dataset {
        let mut rng = seed.rng();
        let mut draw = |block: &[f64]| -> Vec<f64> {
            let n = block.len();
            (0..n).map(|_| block[rng.random_range(0..n)]).collect()
        };
        match self {
            Dataset::Grouped { groups, followup } => {
                let groups = groups.iter().map(|g| draw(g)).collect();
                let followup = followup.as_ref().map(|f| Followup {
                    group: f.group,
                    values: if f.values.is_empty() { Vec::new() } else { draw(&f.values) },
                });
                Dataset::Grouped { groups, followup }
            }
            Dataset::Regression { x, y } => {
                let n = y.len();
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let xs = x.select(Axis(0), &rows);
                let ys = rows.iter().map(|&r| y[r]).collect();
                Dataset::Regression { x: xs, y: ys }
            }
            Dataset::StagedTwoSample { arm_a, arm_b } => {
                let mut a = Vec::with_capacity(arm_a.len());
                let mut b = Vec::with_capacity(arm_b.len());
                for (ba, bb) in arm_a.iter().zip(arm_b) {
                    a.push(draw(ba));
                    b.push(draw(bb));
                }
                Dataset::StagedTwoSample { arm_a: a, arm_b: b }
            }
        }
    }
}

fn check_finite<'a>(mut values: impl Iterator<Item = &'a f64>) -> Result<()> {
    if values.any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dataset"));
    }
    Ok(())
}

/// Sample mean and covariance (divisor `B − 1`) of stacked `(θ̂*, Z̃*)` vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mean: Vec<f64>,
    pub cov: Array2<f64>,
}

pub fn estimate_joint_moments(replicates: &[Vec<f64>]) -> Result<MomentEstimate> {
    let b = replicates.len();
    if b < 2 {
        return Err(Error::TooFewReplicates(b));
    }
    let dim = replicates[0].len();
    if let Some(bad) = replicates.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let mut mean = vec![0.0; dim];
    for r in replicates {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= b as f64);
    let mut centered = Array2::<f64>::zeros((b, dim));
    for (mut row, r) in centered.rows_mut().into_iter().zip(replicates) {
        for ((c, v), m) in row.iter_mut().zip(r).zip(&mean) {
            *c = v - m;
        }
    }
    let mut cov = centered.t().dot(&centered) / (b as f64 - 1.0);
    for i in 0..dim {
        for j in 0..i {
            let v = 0.5 * (cov[[i, j]] + cov[[j, i]]);
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    Ok(MomentEstimate { mean, cov })
}

/// `Z̃ = Γθ̂ + W` with `Γ = Cov(Z̃, θ̂) Var(θ̂)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDecomposition {
    pub theta_hat: Vec<f64>,
    /// `Var(θ̂)`, `s × s`.
    pub sigma: Array2<f64>,
    /// `d × s`.
    pub gamma: Array2<f64>,
    /// `W = Z̃ − Γθ̂` at the observed data.
    pub offset: Vec<f64>,
}

impl GaussianDecomposition {
    pub fn s(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn d(&self) -> usize {
        self.offset.len()
    }

    /// Variance of coordinate `j` of θ̂.
    pub fn variance(&self, j: usize) -> f64 {
        self.sigma[[j, j]]
    }

    /// Γ applied to `theta`, plus W.
    pub fn reconstruct(&self, theta: &[f64]) -> Vec<f64> {
        let mut z = self.offset.clone();
        for (i, zi) in z.iter_mut().enumerate() {
            for (k, t) in theta.iter().enumerate() {
                *zi += self.gamma[[i, k]] * t;
            }
        }
        z
    }
}

/// Splits the observed basis into the part explained by θ̂ and the offset W.
///
/// `moments` must be over `(θ̂, Z̃)` stacked in that order.
pub fn decompose(moments: &MomentEstimate, theta_hat: &[f64], basis: &[f64]) -> Result<GaussianDecomposition> {
    let s = theta_hat.len();
    let d = basis.len();
    if moments.mean.len() != s + d {
        return Err(Error::DimensionMismatch { expected: s + d, got: moments.mean.len() });
    }
    let sigma = moments.cov.slice(ndarray::s![..s, ..s]).to_owned();
    let cross = moments.cov.slice(ndarray::s![s.., ..s]).to_owned();
    let gamma = if s == 1 {
        let v = sigma[[0, 0]];
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::SingularVariance);
        }
        cross / v
    } else {
        let inv = linalg::inverse_spd(sigma.view())?;
        cross.dot(&inv)
    };
    let mut offset = basis.to_vec();
    for (i, w) in offset.iter_mut().enumerate() {
        for (k, t) in theta_hat.iter().enumerate() {
            *w -= gamma[[i, k]] * t;
        }
    }
    Ok(GaussianDecomposition { theta_hat: theta_hat.to_vec(), sigma, gamma, offset })
}
