//! Labeled bootstrap training data for the selection-probability learner.

use std::io::{Read, Write};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{RandomSeed, OMEGA};
use crate::select::{Selector, SelectorOutput};

/// Rows of `(basis, label)` with a fixed basis dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    dim: usize,
    inputs: Vec<f64>,
    labels: Vec<u8>,
}

impl TrainingSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, inputs: Vec::new(), labels: Vec::new() }
    }

    pub fn push(&mut self, basis: &[f64], label: bool) -> Result<()> {
        if basis.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: basis.len() });
        }
        self.inputs.extend_from_slice(basis);
        self.labels.push(label as u8);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> bool {
        self.labels[i] == 1
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Flat row-major inputs.
    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    /// `(zeros, ones)`.
    pub fn counts(&self) -> (usize, usize) {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        (self.len() - ones, ones)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("z_{j}")).collect();
        header.push("label".into());
        wr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.labels[i].to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let dim = header.len().checked_sub(1).ok_or_else(|| parse_err("empty header"))?;
        for (j, name) in header.iter().enumerate() {
            let expected = if j == dim { "label".to_string() } else { format!("z_{}", j + 1) };
            if name != expected {
                return Err(parse_err(&format!("column {j} is {name:?}, expected {expected:?}")));
            }
        }
        let mut ts = TrainingSet::new(dim);
        for rec in rd.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .take(dim)
                .map(|f| f.parse::<f64>().map_err(|e| parse_err(&e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            let label = match &rec[dim] {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(&format!("label {other:?}"))),
            };
            ts.push(&vals, label)?;
        }
        Ok(ts)
    }
}

fn parse_err(detail: &str) -> Error {
    Error::Parse { what: "training set CSV", detail: detail.to_string() }
}

/// Output of the bootstrap loop: the training set plus the `(θ̂*, Z̃*)`
/// replicates used to estimate covariances.
#[derive(Debug, Clone)]
pub struct BootstrapTraining {
    pub training: TrainingSet,
    pub replicates: Vec<Vec<f64>>,
    /// Replicates where the selector failed outright.
    pub skipped: usize,
}

/// Resamples `data` `b` times, reruns `selector` with fresh ω on each copy,
/// and labels each replicate by whether it reproduced `observed.model`.
/// The observed basis is appended with label 1.
///
/// Replicate `i` draws its resample from stream `i` of `seed` and its ω from
/// stream `i` of a derived family, so the output does not depend on
/// scheduling.
pub fn build_training_set<S: Selector + ?Sized>(
    data: &Dataset,
    selector: &S,
    observed: &SelectorOutput,
    b: usize,
    seed: &RandomSeed,
) -> Result<BootstrapTraining> {
    let dim = observed.basis.len();
    let omega = seed.derive(OMEGA);
    let results = par::map_range(0..b, |i| {
        let boot = data.resample(&seed.stream(i as u64));
        let mut rng = omega.stream(i as u64).rng();
        selector.run(&boot, Some(&observed.model), &mut rng).ok().map(|out| {
            let label = out.model == observed.model;
            let basis = out.centered_basis(observed);
            (basis, label, out.theta_hat)
        })
    });
    let mut training = TrainingSet::new(dim);
    let mut replicates = Vec::with_capacity(b);
    let mut skipped = 0;
    for r in results {
        match r {
            Some((basis, label, theta)) => {
                training.push(&basis, label)?;
                let mut joint = theta;
                joint.extend_from_slice(&basis);
                replicates.push(joint);
            }
            None => skipped += 1,
        }
    }
    training.push(&observed.centered_basis(observed), true)?;
    Ok(BootstrapTraining { training, replicates, skipped })
}

#[derive(Debug, Clone)]
pub struct Balanced {
    pub set: TrainingSet,
    /// Rows appended by duplication.
    pub duplicated: usize,
    /// The absent label when only one occurs; the set is then returned unchanged.
    pub missing_label: Option<bool>,
}

/// If the minority label makes up less than 10% of rows, duplicates minority
/// rows (cycling through them in order) until it reaches `min_frac`.
pub fn balance(ts: &TrainingSet, min_frac: f64) -> Result<Balanced> {
    if ts.is_empty() {
        return Err(Error::InvalidData("empty training set".into()));
    }
    if !(min_frac > 0.0 && min_frac < 0.5) {
        return Err(Error::OutOfRange(format!("minimum label fraction must lie in (0, 0.5), got {min_frac}")));
    }
    let (zeros, ones) = ts.counts();
    let n = ts.len();
    if zeros == 0 || ones == 0 {
        return Ok(Balanced { set: ts.clone(), duplicated: 0, missing_label: Some(ones == 0) });
    }
    let (minority_label, m) = if ones < zeros { (1u8, ones) } else { (0u8, zeros) };
    if m as f64 / n as f64 >= 0.1 {
        return Ok(Balanced { set: ts.clone(), duplicated: 0, missing_label: None });
    }
    // smallest k with (m + k) / (n + k) ≥ min_frac
    let mut k = ((min_frac * n as f64 - m as f64) / (1.0 - min_frac)).ceil().max(0.0) as usize;
    while ((m + k) as f64) < min_frac * (n + k) as f64 {
        k += 1;
    }
    let minority: Vec<usize> = (0..n).filter(|&i| ts.labels[i] == minority_label).collect();
    let mut set = ts.clone();
    for c in 0..k {
        let i = minority[c % minority.len()];
        set.inputs.extend_from_within(i * ts.dim..(i + 1) * ts.dim);
        set.labels.push(minority_label);
    }
    Ok(Balanced { set, duplicated: k, missing_label: None })
}
