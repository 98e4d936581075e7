//! Pivot diagnostic on one drop-the-losers dataset, with the learned
//! selection probability and with selection ignored.

use serde::Serialize;

use super::config::ExperimentConfig;
use super::scenarios::simulate_dtl;
use crate::diagnostics::{ks_uniform, pivot_sample, PivotOptions, PivotSample};
use crate::error::Result;
use crate::inference::ConstantProbability;
use crate::pipeline::{fit_black_box, BlackBoxFit};
use crate::rng::RandomSeed;
use crate::select::{DtlSelector, Selector};

const SIMULATE: u64 = 1;
const SELECT: u64 = 2;
const FIT: u64 = 3;
const PIVOT: u64 = 5;

#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub fit: BlackBoxFit,
    pub adjusted: PivotSample,
    pub unadjusted: PivotSample,
}

/// One summary line per variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosisRow {
    pub variant: &'static str,
    pub ks: f64,
    pub accepted: usize,
    pub attempts: usize,
    pub acceptance_rate: f64,
    pub seed: u64,
}

impl Diagnosis {
    pub fn ks_adjusted(&self) -> f64 {
        ks_uniform(&self.adjusted.values)
    }

    pub fn ks_unadjusted(&self) -> f64 {
        ks_uniform(&self.unadjusted.values)
    }

    pub fn rows(&self, seed: u64) -> Vec<DiagnosisRow> {
        [("adjusted", &self.adjusted), ("unadjusted", &self.unadjusted)]
            .into_iter()
            .map(|(variant, s)| DiagnosisRow {
                variant,
                ks: ks_uniform(&s.values),
                accepted: s.accepted,
                attempts: s.attempts,
                acceptance_rate: s.acceptance_rate(),
                seed,
            })
            .collect()
    }
}

/// Fits the marginalized drop-the-losers pipeline on one simulated dataset
/// and draws `config.pivots` pivots twice over the same bootstrap datasets:
/// once with the learned law and once with the selection probability
/// forced to one.
pub fn run_diagnosis(config: &ExperimentConfig) -> Result<Diagnosis> {
    config.validate()?;
    let seed = RandomSeed::new(config.seed);
    let (data, _) = simulate_dtl(&config.dtl, &seed.derive(SIMULATE))?;
    let selector = DtlSelector { marginalize: true };
    let observed = selector.run(&data, None, &mut seed.derive(SELECT).rng())?;
    let fit = fit_black_box(&data, &selector, &observed, &config.pipeline(), &seed.derive(FIT))?;
    let options = PivotOptions { grid: config.grid(), ..PivotOptions::new(config.pivots) };
    let pivot_seed = seed.derive(PIVOT);
    let adjusted =
        pivot_sample(&data, &selector, &observed, &fit.estimate, &fit.decomposition, &options, &pivot_seed)?;
    let unadjusted = pivot_sample(
        &data,
        &selector,
        &observed,
        &ConstantProbability(1.0),
        &fit.decomposition,
        &options,
        &pivot_seed,
    )?;
    Ok(Diagnosis { fit, adjusted, unadjusted })
}
