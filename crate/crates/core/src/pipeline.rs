//! End-to-end black-box fit: bootstrap, label, balance, train, decompose.

use crate::data::{decompose, estimate_joint_moments, Dataset, GaussianDecomposition};
use crate::error::{Error, Result};
use crate::inference::{condition_coordinate, Alternative, ConditionalLaw, GridSpec, Interval};
use crate::mlp::{train, SelectionProbEstimate, TrainConfig, TrainReport};
use crate::rng::{RandomSeed, BOOT, TRAIN};
use crate::select::{Selector, SelectorOutput};
use crate::training::{balance, build_training_set};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Bootstrap replicates used for training and covariance estimation.
    pub boot: usize,
    pub train: TrainConfig,
    pub grid: GridSpec,
    /// Minority label share restored by duplication.
    pub balance_frac: f64,
}

impl PipelineConfig {
    pub fn paper() -> Self {
        Self { boot: 3000, train: TrainConfig::paper(), grid: GridSpec::default(), balance_frac: 0.2 }
    }

    pub fn desk() -> Self {
        Self { boot: 1000, train: TrainConfig::desk(), ..Self::paper() }
    }
}

/// Everything learned about the selection event from one dataset.
#[derive(Debug, Clone)]
pub struct BlackBoxFit {
    pub observed: SelectorOutput,
    pub estimate: SelectionProbEstimate,
    pub decomposition: GaussianDecomposition,
    pub report: TrainReport,
    /// Label counts `(zeros, ones)` before balancing.
    pub label_counts: (usize, usize),
    pub duplicated: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateInference {
    pub theta_hat: f64,
    pub sd: f64,
    pub interval: Interval,
    /// Two-sided conditional p-value for a zero parameter.
    pub pvalue: f64,
}

pub fn fit_black_box<S: Selector + ?Sized>(
    data: &Dataset,
    selector: &S,
    observed: &SelectorOutput,
    config: &PipelineConfig,
    seed: &RandomSeed,
) -> Result<BlackBoxFit> {
    let boot = build_training_set(data, selector, observed, config.boot, &seed.derive(BOOT))?;
    if boot.replicates.len() < 2 {
        return Err(Error::TooFewReplicates(boot.replicates.len()));
    }
    let label_counts = boot.training.counts();
    let balanced = balance(&boot.training, config.balance_frac)?;
    let (estimate, report) = train(&balanced.set, &config.train, &seed.derive(TRAIN))?;
    let moments = estimate_joint_moments(&boot.replicates)?;
    let decomposition = decompose(&moments, &observed.theta_hat, &observed.basis)?;
    Ok(BlackBoxFit {
        observed: observed.clone(),
        estimate,
        decomposition,
        report,
        label_counts,
        duplicated: balanced.duplicated,
        skipped: boot.skipped,
    })
}

impl BlackBoxFit {
    /// Conditional law for coordinate `j`, other coordinates conditioned away.
    pub fn law(&self, j: usize, grid: GridSpec) -> Result<ConditionalLaw> {
        let inputs = condition_coordinate(&self.decomposition, j)?;
        ConditionalLaw::build(&self.estimate, &inputs, grid)
    }

    pub fn infer(&self, j: usize, alpha: f64, grid: GridSpec) -> Result<CoordinateInference> {
        let law = self.law(j, grid)?;
        let theta_hat = self.decomposition.theta_hat[j];
        Ok(CoordinateInference {
            theta_hat,
            sd: law.sd(),
            interval: law.invert_ci(theta_hat, alpha)?,
            pvalue: law.pvalue(0.0, theta_hat, Alternative::TwoSided),
        })
    }

    pub fn infer_all(&self, alpha: f64, grid: GridSpec) -> Result<Vec<CoordinateInference>> {
        (0..self.decomposition.s()).map(|j| self.infer(j, alpha, grid)).collect()
    }
}
