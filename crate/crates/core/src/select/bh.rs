//! Benjamini–Hochberg screening of group means.

use crate::data::Dataset;
use crate::dist::norm_sf;
use crate::error::{Error, Result};
use crate::rng::Rng;

use super::{ModelId, SelectionAux, Selector, SelectorOutput};

/// Step-up rule: with `k̂ = max{k : p₍ₖ₎ ≤ qk/K}`, reject every hypothesis
/// with `p ≤ p₍ₖ̂₎`.
pub fn bh_select(pvalues: &[f64], q: f64) -> Result<ModelId> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::OutOfRange(format!("FDR level must lie in (0, 1), got {q}")));
    }
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::OutOfRange(format!("p-value {p} outside [0, 1]")));
    }
    let k = pvalues.len();
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cutoff = (1..=k).rev().find(|&i| sorted[i - 1] <= q * i as f64 / k as f64).map(|i| sorted[i - 1]);
    let rejected = match cutoff {
        Some(c) => pvalues.iter().enumerate().filter(|(_, p)| **p <= c).map(|(i, _)| i).collect(),
        None => Vec::new(),
    };
    Ok(ModelId::rejections(rejected))
}

/// BH applied to z-test p-values `2Φ(−√n |X̄ₖ|)` of unit-variance groups.
/// The basis is the vector of group means and θ̂ the means of the rejected
/// groups.
#[derive(Debug, Clone, Copy)]
pub struct BhSelector {
    pub q: f64,
}

impl Selector for BhSelector {
    fn run(&self, data: &Dataset, target: Option<&ModelId>, _omega: &mut Rng) -> Result<SelectorOutput> {
        let Dataset::Grouped { groups, .. } = data else {
            return Err(Error::InvalidData("BH screening needs grouped data".into()));
        };
        let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
        let pvalues: Vec<f64> = groups
            .iter()
            .zip(&means)
            .map(|(g, m)| (2.0 * norm_sf((g.len() as f64).sqrt() * m.abs())).min(1.0))
            .collect();
        let model = bh_select(&pvalues, self.q)?;
        let rejected = match target {
            None if model.is_empty() => return Err(Error::NothingSelected("BH rejected nothing")),
            None => match &model {
                ModelId::RejectionSet(r) => r.clone(),
                _ => unreachable!(),
            },
            Some(ModelId::RejectionSet(r)) if !r.is_empty() && r.iter().all(|&k| k < means.len()) => r.clone(),
            Some(other) => return Err(Error::Mismatch(format!("{other:?} is not a usable rejection set"))),
        };
        let theta_hat = rejected.iter().map(|&k| means[k]).collect();
        let d = means.len();
        Ok(SelectorOutput { model, basis: means, v_hat: vec![0.0; d], theta_hat, aux: SelectionAux::Bh { pvalues } })
    }
}
