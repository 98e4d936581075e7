//! Re-runnable selection algorithms.
//!
//! A [`Selector`] maps a dataset (plus external randomness ω) to a
//! [`ModelId`], and reports the basis `Z̃` and target statistic `θ̂` that the
//! rest of the pipeline conditions on. On bootstrap data the basis and
//! target are always computed for the *observed* model, so replicates are
//! comparable with the original fit.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Result;
use crate::rng::Rng;

pub mod bh;
pub mod dtl;
pub mod lasso;
pub mod repeated;

pub use bh::{bh_select, BhSelector};
pub use dtl::{dtl_outputs, dtl_select, DtlSelector};
pub use lasso::{carve_select, lasso_cd, lasso_cd_with, CarveSelector, LassoFit, LassoOptions};
pub use repeated::{repeated_test_run, two_sample_t, RepeatedTestSelector};

/// Canonical encoding of a selection outcome. Index sets are sorted and
/// deduplicated on construction so equality is structural.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelId {
    Winner(usize),
    Support(Vec<usize>),
    RejectionSet(Vec<usize>),
    StoppedAt(usize),
    /// The procedure did not stop within its stage budget.
    NotStopped,
}

impl ModelId {
    pub fn support(mut idx: Vec<usize>) -> Self {
        idx.sort_unstable();
        idx.dedup();
        ModelId::Support(idx)
    }

    pub fn rejections(mut idx: Vec<usize>) -> Self {
        idx.sort_unstable();
        idx.dedup();
        ModelId::RejectionSet(idx)
    }

    /// True when nothing was selected (empty support or rejection set, or no stop).
    pub fn is_empty(&self) -> bool {
        match self {
            ModelId::Support(s) | ModelId::RejectionSet(s) => s.is_empty(),
            ModelId::NotStopped => true,
            _ => false,
        }
    }
}

/// Selector-specific side information.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionAux {
    /// Drop-the-losers: `a = max_{j≠k*} X̄_j` and the winner's first-stage mean.
    Dtl { runner_up: f64, winner_mean: f64 },
    /// Data carving: rows used for the lasso (sorted).
    Carve { subset: Vec<usize> },
    /// BH: the per-hypothesis p-values.
    Bh { pvalues: Vec<f64> },
    /// Repeated testing: p-value at each examined stage.
    Repeated { stage_pvalues: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorOutput {
    pub model: ModelId,
    /// `Z̃ = Ẑ − V̂`.
    pub basis: Vec<f64>,
    /// The marginalized component `V̂`; all zeros when nothing is marginalized.
    pub v_hat: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub aux: SelectionAux,
}

impl SelectorOutput {
    /// Basis used as a training input for a bootstrap replicate, re-centered
    /// so the marginalized part is measured relative to the observed `V̂`.
    pub fn centered_basis(&self, observed: &SelectorOutput) -> Vec<f64> {
        self.basis.iter().zip(&observed.v_hat).map(|(z, v)| z + v).collect()
    }
}

pub trait Selector: Sync {
    /// Runs the selection on `data` using `omega` for any external randomness.
    ///
    /// With `target = None` the output describes the model this run selected,
    /// and selecting nothing is an error. With `target = Some(m)` the basis
    /// and `θ̂` are computed for `m` and any selection outcome (including an
    /// empty one) is reported in `model`.
    fn run(&self, data: &Dataset, target: Option<&ModelId>, omega: &mut Rng) -> Result<SelectorOutput>;
}
