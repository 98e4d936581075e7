//! Repeated significance testing: keep adding observations to both arms
//! until a two-sample t-test rejects.

use crate::data::Dataset;
use crate::dist::student_t_two_sided;
use crate::error::{Error, Result};
use crate::rng::{RandomSeed, Rng};

use super::{ModelId, SelectionAux, Selector, SelectorOutput};

/// Pooled-variance two-sample t-test. Returns `(t, two-sided p)`.
///
/// Zero pooled variance gives `(0, 1)`.
pub fn two_sample_t(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::InvalidData("each sample needs at least two observations".into()));
    }
    let sx = Summary::of(x);
    let sy = Summary::of(y);
    Ok(t_from_summaries(&sx, &sy))
}

#[derive(Debug, Clone, Copy, Default)]
struct Summary {
    n: f64,
    mean: f64,
    /// Sum of squared deviations.
    ss: f64,
}

impl Summary {
    fn of(v: &[f64]) -> Self {
        let mut s = Summary::default();
        s.extend(v);
        s
    }

    // Chan et al. parallel update of (n, mean, ss).
    fn extend(&mut self, block: &[f64]) {
        if block.is_empty() {
            return;
        }
        let nb = block.len() as f64;
        let mb = block.iter().sum::<f64>() / nb;
        let ssb: f64 = block.iter().map(|v| (v - mb).powi(2)).sum();
        let n = self.n + nb;
        let delta = mb - self.mean;
        self.ss += ssb + delta * delta * self.n * nb / n;
        self.mean += delta * nb / n;
        self.n = n;
    }

    fn sd(&self) -> f64 {
        if self.n > 1.0 {
            (self.ss / (self.n - 1.0)).sqrt()
        } else {
            0.0
        }
    }
}

fn t_from_summaries(a: &Summary, b: &Summary) -> (f64, f64) {
    let df = a.n + b.n - 2.0;
    let pooled = (a.ss + b.ss) / df;
    if !(pooled > 0.0) {
        return (0.0, 1.0);
    }
    let t = (a.mean - b.mean) / (pooled * (1.0 / a.n + 1.0 / b.n)).sqrt();
    (t, student_t_two_sided(t, df))
}

/// Stops at the first stage whose cumulative t-test has `p < alpha0`.
///
/// The basis holds, for each stage up to the stopping stage, the cumulative
/// `(mean_a, sd_a, mean_b, sd_b)`; θ̂ is `mean_a − mean_b` at that stage.
#[derive(Debug, Clone, Copy)]
pub struct RepeatedTestSelector {
    pub alpha0: f64,
    pub max_stages: usize,
}

impl Default for RepeatedTestSelector {
    fn default() -> Self {
        Self { alpha0: 0.1, max_stages: 20 }
    }
}

impl Selector for RepeatedTestSelector {
    fn run(&self, data: &Dataset, target: Option<&ModelId>, _omega: &mut Rng) -> Result<SelectorOutput> {
        let Dataset::StagedTwoSample { arm_a, arm_b } = data else {
            return Err(Error::InvalidData("repeated testing needs staged two-sample data".into()));
        };
        let available = arm_a.len();
        let limit = match target {
            Some(ModelId::StoppedAt(t)) if *t >= 1 && *t <= available => *t,
            Some(other) => return Err(Error::Mismatch(format!("{other:?} is not a usable stopping stage"))),
            None => self.max_stages.min(available),
        };
        let (mut sa, mut sb) = (Summary::default(), Summary::default());
        let mut basis = Vec::with_capacity(4 * limit);
        let mut stage_pvalues = Vec::with_capacity(limit);
        for t in 0..limit {
            sa.extend(&arm_a[t]);
            sb.extend(&arm_b[t]);
            basis.extend([sa.mean, sa.sd(), sb.mean, sb.sd()]);
            let p = if sa.n >= 2.0 && sb.n >= 2.0 { t_from_summaries(&sa, &sb).1 } else { 1.0 };
            stage_pvalues.push(p);
            // with a target the basis must cover all of its stages
            if p < self.alpha0 && target.is_none() {
                break;
            }
        }
        let first_stop = stage_pvalues.iter().position(|&p| p < self.alpha0).map(|i| i + 1);
        let model = match first_stop {
            Some(t) => ModelId::StoppedAt(t),
            None => ModelId::NotStopped,
        };
        let stage = match target {
            Some(ModelId::StoppedAt(t)) => *t,
            _ => match model {
                ModelId::StoppedAt(t) => t,
                _ => return Err(Error::NothingSelected("t-test never significant within the stage budget")),
            },
        };
        basis.truncate(4 * stage);
        let theta = basis[4 * (stage - 1)] - basis[4 * (stage - 1) + 2];
        let d = basis.len();
        Ok(SelectorOutput {
            model,
            basis,
            v_hat: vec![0.0; d],
            theta_hat: vec![theta],
            aux: SelectionAux::Repeated { stage_pvalues },
        })
    }
}

pub fn repeated_test_run(data: &Dataset, alpha0: f64, max_stages: usize) -> Result<SelectorOutput> {
    RepeatedTestSelector { alpha0, max_stages }.run(data, None, &mut RandomSeed::new(0).rng())
}
