//! Bootstrap pivots for checking the estimated conditional law.
//!
//! For each bootstrap dataset that reproduces the observed selection, the
//! law is rebuilt around the observed θ̂ with the replicate's own offset `W*`
//! and evaluated at the replicate's θ̂*. A correct law makes these values
//! uniform.

use std::io::Write;

use crate::data::{Dataset, GaussianDecomposition};
use crate::error::{Error, Result};
use crate::inference::{ConditionalLaw, GridSpec, LawInputs, SelectionProbability};
use crate::par;
use crate::rng::{RandomSeed, OMEGA};
use crate::select::{Selector, SelectorOutput};

#[derive(Debug, Clone, PartialEq)]
pub struct PivotSample {
    pub values: Vec<f64>,
    pub attempts: usize,
    pub accepted: usize,
}

impl PivotSample {
    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempts as f64
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PivotOptions {
    pub target: usize,
    pub max_attempts: usize,
    pub grid: GridSpec,
}

impl PivotOptions {
    /// Attempts capped at fifty per requested pivot.
    pub fn new(target: usize) -> Self {
        Self { target, max_attempts: 50 * target, grid: GridSpec::default() }
    }
}

/// Draws pivots until `options.target` replicates reproduce the observed
/// model or the attempt budget runs out.
pub fn pivot_sample<S: Selector + ?Sized>(
    data: &Dataset,
    selector: &S,
    observed: &SelectorOutput,
    pi_hat: &dyn SelectionProbability,
    decomp: &GaussianDecomposition,
    options: &PivotOptions,
    seed: &RandomSeed,
) -> Result<PivotSample> {
    if decomp.s() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: decomp.s() });
    }
    let sigma2 = decomp.variance(0);
    let theta_obs = decomp.theta_hat[0];
    let direction = decomp.gamma.column(0).to_vec();
    let attempt = |i: usize| -> Option<Result<f64>> {
        let boot = data.resample(&seed.stream(i as u64));
        let mut omega = seed.derive(OMEGA).stream(i as u64).rng();
        let out = selector.run(&boot, None, &mut omega).ok()?;
        if out.model != observed.model {
            return None;
        }
        let basis = out.centered_basis(observed);
        let theta_star = out.theta_hat[0];
        let offset = basis.iter().zip(&direction).map(|(z, g)| z - g * theta_star).collect();
        let inputs = LawInputs { sigma2, theta_hat: theta_obs, direction: direction.clone(), offset };
        Some(ConditionalLaw::build(pi_hat, &inputs, options.grid).map(|law| law.smooth_cdf(theta_obs, theta_star)))
    };
    let (found, attempts) = par::first_successes(options.target, options.max_attempts, attempt);
    let values = found.into_iter().map(|(_, v)| v).collect::<Result<Vec<f64>>>()?;
    if values.is_empty() && attempts > 0 {
        return Err(Error::NoAcceptedPivots { attempts });
    }
    Ok(PivotSample { accepted: values.len(), values, attempts })
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self { sorted }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        self.sorted.partition_point(|&v| v <= t) as f64 / self.sorted.len() as f64
    }

    pub fn points(&self) -> &[f64] {
        &self.sorted
    }
}

pub fn ecdf(values: &[f64]) -> Ecdf {
    Ecdf::new(values)
}

/// Kolmogorov-Smirnov distance `sup_t |F_n(t) − t|` to the uniform law.
pub fn ks_uniform(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

pub fn write_pivots_csv<W: Write>(values: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "pivot")?;
    for v in values {
        writeln!(w, "{v:?}")?;
    }
    Ok(())
}

/// `(t, ECDF(t))` at 0, every sorted pivot, and 1.
pub fn write_ecdf_csv<W: Write>(values: &[f64], mut w: W) -> Result<()> {
    let e = Ecdf::new(values);
    writeln!(w, "t,ecdf")?;
    let mut ts = vec![0.0];
    ts.extend(e.points().iter().copied());
    ts.push(1.0);
    ts.dedup();
    for t in ts {
        writeln!(w, "{t:?},{:?}", e.eval(t))?;
    }
    Ok(())
}
