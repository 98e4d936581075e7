use std::fmt;

use serde::Serialize;

use crate::inference::Interval;
use crate::par;
use crate::rng::RandomSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    Splitting,
    Bb,
    BbMarginalized,
    AnalyticTn,
    AnalyticMarginal,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Self::Naive, Self::Splitting, Self::Bb, Self::BbMarginalized, Self::AnalyticTn, Self::AnalyticMarginal];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Splitting => "splitting",
            Self::Bb => "bb",
            Self::BbMarginalized => "bb_marginalized",
            Self::AnalyticTn => "analytic_tn",
            Self::AnalyticMarginal => "analytic_marginal",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One interval for one target in one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalRecord {
    pub method: Method,
    pub replicate: usize,
    /// Position of the target among those inferred in this replicate.
    pub target: usize,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub truth: f64,
    pub covered: bool,
    pub clipped: bool,
}

impl IntervalRecord {
    pub fn new(method: Method, replicate: usize, target: usize, estimate: f64, interval: Interval, truth: f64) -> Self {
        Self {
            method,
            replicate,
            target,
            estimate,
            lower: interval.lower,
            upper: interval.upper,
            truth,
            covered: interval.covers(truth),
            clipped: interval.clipped(),
        }
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Aggregate over replicates for one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub experiment: String,
    pub method: Method,
    pub scenario_param: String,
    pub replicates: usize,
    pub coverage: f64,
    pub coverage_lo: f64,
    pub coverage_hi: f64,
    pub mean_length: f64,
    pub length_lo: f64,
    pub length_hi: f64,
    pub clipped_count: usize,
    pub seed: u64,
}

/// Resamples drawn for the error bars.
pub const ERROR_BAR_RESAMPLES: usize = 1000;

/// Per-replicate sums for one method: (covered, count, length sum).
fn replicate_sums(records: &[IntervalRecord], replicates: &[usize]) -> Vec<(f64, f64, f64)> {
    replicates
        .iter()
        .map(|&r| {
            records.iter().filter(|x| x.replicate == r).fold((0.0, 0.0, 0.0), |(c, n, l), x| {
                (c + x.covered as u8 as f64, n + 1.0, l + x.length())
            })
        })
        .collect()
}

fn ratio(sums: &[(f64, f64, f64)], idx: impl Iterator<Item = usize>) -> (f64, f64) {
    let (c, n, l) = idx.fold((0.0, 0.0, 0.0), |acc, i| (acc.0 + sums[i].0, acc.1 + sums[i].1, acc.2 + sums[i].2));
    if n == 0.0 {
        (f64::NAN, f64::NAN)
    } else {
        (c / n, l / n)
    }
}

/// Percentile bounds, ignoring NaN draws.
fn percentile_band(mut draws: Vec<f64>) -> (f64, f64) {
    draws.retain(|v| !v.is_nan());
    if draws.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    draws.sort_by(f64::total_cmp);
    let at = |q: f64| draws[((q * (draws.len() - 1) as f64).round() as usize).min(draws.len() - 1)];
    (at(0.025), at(0.975))
}

/// Coverage and mean length pooled over all records of `method`, with
/// 95% bands from resampling whole replicates.
pub fn aggregate(
    experiment: &str,
    scenario_param: &str,
    method: Method,
    records: &[IntervalRecord],
    seed: u64,
    bootstrap_seed: &RandomSeed,
) -> Option<MethodResult> {
    let mine: Vec<IntervalRecord> = records.iter().filter(|r| r.method == method).copied().collect();
    if mine.is_empty() {
        return None;
    }
    let mut reps: Vec<usize> = mine.iter().map(|r| r.replicate).collect();
    reps.sort_unstable();
    reps.dedup();
    let sums = replicate_sums(&mine, &reps);
    let (coverage, mean_length) = ratio(&sums, 0..sums.len());
    let m = sums.len();
    let draws = par::map_range(0..ERROR_BAR_RESAMPLES, |b| {
        let mut rng = bootstrap_seed.stream(b as u64).rng();
        let idx: Vec<usize> = (0..m).map(|_| rand::Rng::random_range(&mut rng, 0..m)).collect();
        ratio(&sums, idx.into_iter())
    });
    let (coverage_lo, coverage_hi) = percentile_band(draws.iter().map(|d| d.0).collect());
    let (length_lo, length_hi) = percentile_band(draws.iter().map(|d| d.1).collect());
    Some(MethodResult {
        experiment: experiment.to_string(),
        method,
        scenario_param: scenario_param.to_string(),
        replicates: m,
        coverage,
        coverage_lo,
        coverage_hi,
        mean_length,
        length_lo,
        length_hi,
        clipped_count: mine.iter().filter(|r| r.clipped).count(),
        seed,
    })
}
