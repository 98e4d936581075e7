//! Simulation experiments: scenario generators, per-replicate intervals,
//! aggregation with error bars, and result files.

pub mod config;
pub mod diagnose;
pub mod emit;
pub mod records;
pub mod scenarios;

use std::sync::Mutex;

pub use config::{ExperimentConfig, ExperimentKind, OutputFormat, Scale};
pub use diagnose::{run_diagnosis, Diagnosis};
pub use emit::{emit, write_records, write_results};
pub use records::{aggregate, IntervalRecord, Method, MethodResult};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::RandomSeed;

/// Attempts allowed per requested replicate before giving up.
pub const ATTEMPTS_PER_REPLICATE: usize = 20;

const AGGREGATE: u64 = 4;

type ReplicateFn = fn(&ExperimentConfig, usize, &RandomSeed) -> Result<Option<Vec<IntervalRecord>>>;

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub results: Vec<MethodResult>,
    pub records: Vec<IntervalRecord>,
    /// Simulated datasets consumed, including excluded ones.
    pub attempts: usize,
    /// Datasets on which the selector picked nothing.
    pub empty: usize,
    /// Datasets dropped because a method failed.
    pub failures: usize,
    /// Message of the first failure, if any.
    pub first_failure: Option<String>,
}

fn replicate_fn(kind: ExperimentKind) -> Option<ReplicateFn> {
    match kind {
        ExperimentKind::Dtl => Some(scenarios::dtl_replicate),
        ExperimentKind::Lasso => Some(scenarios::lasso_replicate),
        ExperimentKind::Bh => Some(scenarios::bh_replicate),
        ExperimentKind::Repeated => Some(scenarios::repeated_replicate),
        ExperimentKind::Diagnose => None,
    }
}

/// Runs `config.replicates` successful replicates. Simulated dataset `i`
/// draws everything from stream `i` of the configured seed, so output does
/// not depend on thread count. A dataset is excluded when the selector picks
/// nothing or any method fails on it, which keeps the methods paired.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let Some(run) = replicate_fn(config.experiment) else {
        return Err(Error::Config("the diagnose experiment produces pivots, not intervals".into()));
    };
    let base = RandomSeed::new(config.seed);
    let empty = Mutex::new(Vec::new());
    let failed = Mutex::new(Vec::new());
    let max_attempts = ATTEMPTS_PER_REPLICATE * config.replicates;
    let (found, attempts) = par::first_successes(config.replicates, max_attempts, |i| {
        match run(config, i, &base.stream(i as u64)) {
            Ok(Some(records)) => Some(records),
            Ok(None) => {
                empty.lock().unwrap().push(i);
                None
            }
            Err(e) => {
                failed.lock().unwrap().push((i, e.to_string()));
                None
            }
        }
    });
    // work past the last consumed attempt is discarded
    let empty = empty.into_inner().unwrap().into_iter().filter(|&i| i < attempts).count();
    let mut failed: Vec<(usize, String)> = failed.into_inner().unwrap().into_iter().filter(|f| f.0 < attempts).collect();
    failed.sort_by_key(|f| f.0);
    if found.is_empty() {
        let why = failed.first().map_or("the selector never selected anything".to_string(), |f| f.1.clone());
        return Err(Error::OutOfRange(format!("no usable replicate in {attempts} attempts: {why}")));
    }
    let records: Vec<IntervalRecord> = found.into_iter().flat_map(|(_, r)| r).collect();
    let error_bars = base.derive(AGGREGATE);
    let experiment = config.experiment.as_str();
    let scenario = config.scenario_param();
    let results = Method::ALL
        .iter()
        .filter_map(|&m| aggregate(experiment, &scenario, m, &records, config.seed, &error_bars))
        .collect();
    Ok(ExperimentOutput {
        config: config.clone(),
        results,
        records,
        attempts,
        empty,
        failures: failed.len(),
        first_failure: failed.into_iter().next().map(|f| f.1),
    })
}
