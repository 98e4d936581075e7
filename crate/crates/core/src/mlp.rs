//! Feed-forward network estimating the selection probability.
//!
//! ReLU hidden layers, a single logistic output, cross-entropy loss and
//! Adam. Everything runs on one thread in a fixed order, so training is
//! bit-reproducible for a given seed.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::RandomSeed;
use crate::training::TrainingSet;

/// Probability clamp inside the logarithms of the loss.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in × fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weights: Array2::zeros((fan_in, fan_out)), bias: Array1::zeros(fan_out) }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weights.nrows(), self.weights.ncols())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// All-zero parameters for the given layer widths (input first, output last).
    pub fn zeros(widths: &[usize]) -> Self {
        Self { layers: widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect() }
    }

    /// Weights uniform on `±√(6/(fan_in + fan_out))`, zero biases.
    pub fn init(widths: &[usize], seed: &RandomSeed) -> Self {
        let mut rng = seed.rng();
        let layers = widths
            .windows(2)
            .map(|w| {
                let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let weights = Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-a..a));
                Layer { weights, bias: Array1::zeros(w[1]) }
            })
            .collect();
        Self { layers }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.layers.iter().map(|l| l.weights.nrows()).collect();
        if let Some(last) = self.layers.last() {
            w.push(last.weights.ncols());
        }
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weights.nrows())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Output logits for already-standardized inputs (rows).
    pub fn logits(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.forward_cached(x).1
    }

    fn forward_cached(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array1<f64>) {
        let last = self.layers.len() - 1;
        let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(last);
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { x } else { hidden[l - 1].view() };
            let mut z = input.dot(&layer.weights);
            z += &layer.bias;
            if l == last {
                return (hidden, z.index_axis_move(Axis(1), 0));
            }
            z.mapv_inplace(|v| v.max(0.0));
            hidden.push(z);
        }
        unreachable!("network has at least one layer")
    }
}

/// Per-coordinate affine standardization fitted on training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub const SD_FLOOR: f64 = 1e-12;

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], sd: vec![1.0; dim] }
    }

    pub fn fit(rows: ArrayView2<f64>) -> Self {
        let n = rows.nrows().max(1) as f64;
        let mean: Vec<f64> = rows.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_else(|| vec![0.0; rows.ncols()]);
        let sd = rows
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(col, m)| (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt().max(Self::SD_FLOOR))
            .collect();
        Self { mean, sd }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, rows: ArrayView2<f64>) -> Array2<f64> {
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.sd) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log σ(t)` without cancellation.
fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

fn check_dim(params: &MlpParams, std: &Standardizer, got: usize) -> Result<()> {
    let expected = params.input_dim();
    if std.dim() != expected {
        return Err(Error::DimensionMismatch { expected, got: std.dim() });
    }
    if got != expected {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn as_matrix(rows: &[f64], dim: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows.len() / dim.max(1), dim), rows).expect("row-major rows")
}

/// Network output for one raw (unstandardized) input.
pub fn forward(params: &MlpParams, std: &Standardizer, z: &[f64]) -> Result<f64> {
    check_dim(params, std, z.len())?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network input"));
    }
    let x = std.apply(as_matrix(z, z.len()));
    Ok(sigmoid(params.logits(x.view())[0]))
}

fn row_loss(p: f64, label: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// Summed cross-entropy over the training set.
pub fn loss(params: &MlpParams, std: &Standardizer, ts: &TrainingSet) -> Result<f64> {
    check_dim(params, std, ts.dim())?;
    let x = std.apply(as_matrix(ts.inputs(), ts.dim()));
    let logits = params.logits(x.view());
    Ok(logits.iter().zip(ts.labels()).map(|(&t, &l)| row_loss(sigmoid(t), l as f64)).sum())
}

/// Gradients with the same shapes as [`MlpParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weights *= c;
            l.bias *= c;
        }
    }
}

/// Summed loss and its exact gradient on a batch of standardized rows.
fn loss_and_grad(params: &MlpParams, x: ArrayView2<f64>, labels: &[f64]) -> (f64, Gradients) {
    let (hidden, logits) = params.forward_cached(x);
    let mut total = 0.0;
    let mut delta = Array2::<f64>::zeros((labels.len(), 1));
    for (i, (&t, &y)) in logits.iter().zip(labels).enumerate() {
        let p = sigmoid(t);
        total += row_loss(p, y);
        // the clamped loss is flat where the clamp binds
        if p > PROB_CLAMP && p < 1.0 - PROB_CLAMP {
            delta[[i, 0]] = p - y;
        }
    }
    let mut grads: Vec<Layer> = Vec::with_capacity(params.layers.len());
    for l in (0..params.layers.len()).rev() {
        let input = if l == 0 { x } else { hidden[l - 1].view() };
        let weights = input.t().dot(&delta);
        let bias = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut next = delta.dot(&params.layers[l].weights.t());
            Zip::from(&mut next).and(&hidden[l - 1]).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = next;
        }
        grads.push(Layer { weights, bias });
    }
    grads.reverse();
    (total, Gradients { layers: grads })
}

/// Exact gradient of the summed loss over a batch of raw inputs.
pub fn backward(params: &MlpParams, std: &Standardizer, batch: &TrainingSet) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::InvalidData("empty batch".into()));
    }
    check_dim(params, std, batch.dim())?;
    let x = std.apply(as_matrix(batch.inputs(), batch.dim()));
    let labels: Vec<f64> = batch.labels().iter().map(|&l| l as f64).collect();
    Ok(loss_and_grad(params, x.view(), &labels).1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        let zeros: Vec<Layer> = params.layers.iter().map(Layer::zeros_like).collect();
        Self { config, m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(state: &mut AdamState, params: &mut MlpParams, grads: &Gradients) -> Result<()> {
    if grads.layers.len() != params.layers.len() || state.m.len() != params.layers.len() {
        return Err(Error::DimensionMismatch { expected: params.layers.len(), got: grads.layers.len() });
    }
    state.t += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    };
    for (((layer, m), v), g) in params.layers.iter_mut().zip(&mut state.m).zip(&mut state.v).zip(&grads.layers) {
        if layer.weights.dim() != g.weights.dim() || layer.bias.dim() != g.bias.dim() {
            return Err(Error::DimensionMismatch { expected: layer.weights.len(), got: g.weights.len() });
        }
        Zip::from(&mut layer.weights).and(&mut m.weights).and(&mut v.weights).and(&g.weights).for_each(update);
        Zip::from(&mut layer.bias).and(&mut m.bias).and(&mut v.bias).and(&g.bias).for_each(update);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    /// Fraction of rows held out from fitting; 0 disables.
    pub holdout: f64,
    /// With a holdout, stop once its loss has not improved for this many
    /// epochs and keep the best parameters seen.
    pub patience: Option<usize>,
}

impl TrainConfig {
    /// Three hidden layers of 200 units, 3000 epochs, batches of 200.
    pub fn paper() -> Self {
        Self { hidden: vec![200, 200, 200], epochs: 3000, batch: 200, adam: AdamConfig::default(), holdout: 0.0, patience: None }
    }

    /// Smaller network, at most 500 epochs, and early stopping on a 20%
    /// holdout for desk-scale runs.
    pub fn desk() -> Self {
        Self { hidden: vec![64, 64, 64], epochs: 500, holdout: 0.2, patience: Some(30), ..Self::paper() }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-row loss over the last epoch.
    pub final_loss: f64,
    /// Epochs actually run.
    pub epochs: usize,
    /// Epoch whose parameters were kept, when early stopping is active.
    pub best_epoch: Option<usize>,
    /// Mean per-row holdout loss of the kept parameters.
    pub holdout_loss: Option<f64>,
    pub steps: u64,
    /// True when the training rows carried only one label.
    pub single_label: bool,
    pub holdout_accuracy: Option<f64>,
}

/// Trained network plus its input standardizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionProbEstimate {
    pub params: MlpParams,
    pub standardizer: Standardizer,
}

impl SelectionProbEstimate {
    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    fn logits_raw(&self, rows: &[f64]) -> Result<Array1<f64>> {
        let dim = self.dim();
        if dim == 0 || rows.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, got: rows.len() });
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        let x = self.standardizer.apply(as_matrix(rows, dim));
        Ok(self.params.logits(x.view()))
    }

    /// π̂(z), kept strictly inside (0, 1).
    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        check_dim(&self.params, &self.standardizer, z.len())?;
        let t = self.logits_raw(z)?[0];
        Ok(sigmoid(t).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    /// `log π̂` for many row-major inputs.
    pub fn log_predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        Ok(self.logits_raw(rows)?.iter().map(|&t| log_sigmoid(t)).collect())
    }

    /// Plain-text serialization; floats carry 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::from("selprob-mlp 1\n");
        let line = |s: &mut String, key: &str, vals: &mut dyn Iterator<Item = f64>| {
            s.push_str(key);
            for v in vals {
                let _ = write!(s, " {v:.16e}");
            }
            s.push('\n');
        };
        s.push_str("widths");
        for w in self.params.widths() {
            let _ = write!(s, " {w}");
        }
        s.push('\n');
        line(&mut s, "mean", &mut self.standardizer.mean.iter().copied());
        line(&mut s, "sd", &mut self.standardizer.sd.iter().copied());
        for (i, layer) in self.params.layers.iter().enumerate() {
            let _ = writeln!(s, "layer {i}");
            for row in layer.weights.rows() {
                line(&mut s, "w", &mut row.iter().copied());
            }
            line(&mut s, "b", &mut layer.bias.iter().copied());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |d: &str| Error::Parse { what: "network file", detail: d.to_string() };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("selprob-mlp 1") {
            return Err(bad("missing header"));
        }
        let mut field = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing {key}")))?;
            let mut toks = line.split_whitespace();
            if toks.next() != Some(key) {
                return Err(bad(&format!("expected {key:?} line, got {line:?}")));
            }
            Ok(toks.map(String::from).collect())
        };
        let floats = |toks: Vec<String>| -> Result<Vec<f64>> {
            toks.iter().map(|t| t.parse::<f64>().map_err(|e| bad(&e.to_string()))).collect()
        };
        let widths: Vec<usize> = field("widths")?
            .iter()
            .map(|t| t.parse::<usize>().map_err(|e| bad(&e.to_string())))
            .collect::<Result<_>>()?;
        if widths.len() < 2 || widths.last() != Some(&1) {
            return Err(bad("widths must end with a single output"));
        }
        let mean = floats(field("mean")?)?;
        let sd = floats(field("sd")?)?;
        if mean.len() != widths[0] || sd.len() != widths[0] {
            return Err(bad("standardizer length differs from input width"));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (i, w) in widths.windows(2).enumerate() {
            if field("layer")? != vec![i.to_string()] {
                return Err(bad(&format!("expected layer {i}")));
            }
            let mut weights = Array2::zeros((w[0], w[1]));
            for r in 0..w[0] {
                let row = floats(field("w")?)?;
                if row.len() != w[1] {
                    return Err(bad("weight row has the wrong length"));
                }
                weights.row_mut(r).assign(&Array1::from(row));
            }
            let bias = floats(field("b")?)?;
            if bias.len() != w[1] {
                return Err(bad("bias has the wrong length"));
            }
            layers.push(Layer { weights, bias: Array1::from(bias) });
        }
        Ok(Self { params: MlpParams { layers }, standardizer: Standardizer { mean, sd } })
    }
}

/// Fits the network by minibatch Adam on shuffled rows.
pub fn train(ts: &TrainingSet, config: &TrainConfig, seed: &RandomSeed) -> Result<(SelectionProbEstimate, TrainReport)> {
    if ts.is_empty() {
        return Err(Error::InvalidData("empty training set".into()));
    }
    if config.batch == 0 {
        return Err(Error::OutOfRange("batch size must be positive".into()));
    }
    let dim = ts.dim();
    let mut rng = seed.rng();
    let mut order: Vec<usize> = (0..ts.len()).collect();
    let n_hold = if config.holdout > 0.0 {
        order.shuffle(&mut rng);
        ((config.holdout * ts.len() as f64).floor() as usize).min(ts.len() - 1)
    } else {
        0
    };
    let (hold_idx, fit_idx) = order.split_at(n_hold);
    let gather = |idx: &[usize]| -> (Array2<f64>, Vec<f64>) {
        let mut x = Array2::zeros((idx.len(), dim));
        for (r, &i) in idx.iter().enumerate() {
            x.row_mut(r).assign(&ndarray::ArrayView1::from(ts.row(i)));
        }
        (x, idx.iter().map(|&i| ts.labels()[i] as f64).collect())
    };
    let (raw, labels) = gather(fit_idx);
    let standardizer = Standardizer::fit(raw.view());
    let x = standardizer.apply(raw.view());
    let single_label = labels.iter().all(|&l| l == labels[0]);

    let mut widths = vec![dim];
    widths.extend(&config.hidden);
    widths.push(1);
    let mut params = MlpParams::init(&widths, &seed.derive(crate::rng::TRAIN));
    let mut adam = AdamState::new(&params, config.adam);
    let n = labels.len();
    let (hold_x, hold_y) = gather(hold_idx);
    let hold_x = standardizer.apply(hold_x.view());
    let hold_loss = |p: &MlpParams| -> f64 {
        let logits = p.logits(hold_x.view());
        logits.iter().zip(&hold_y).map(|(&t, &y)| row_loss(sigmoid(t), y)).sum::<f64>() / hold_y.len() as f64
    };
    let stopping = config.patience.filter(|_| n_hold > 0);
    let mut best: Option<(usize, f64, MlpParams)> = None;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut final_loss = f64::NAN;
    let mut epochs_run = 0;
    for epoch in 0..config.epochs {
        perm.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in perm.chunks(config.batch) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| labels[i]).collect();
            let (batch_loss, mut grads) = loss_and_grad(&params, xb.view(), &yb);
            grads.scale(1.0 / chunk.len() as f64);
            adam_step(&mut adam, &mut params, &grads)?;
            epoch_loss += batch_loss;
        }
        if !epoch_loss.is_finite() || !params.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        final_loss = epoch_loss / n as f64;
        epochs_run = epoch + 1;
        if let Some(patience) = stopping {
            let h = hold_loss(&params);
            if best.as_ref().is_none_or(|b| h < b.1) {
                best = Some((epoch, h, params.clone()));
            } else if epoch - best.as_ref().map_or(0, |b| b.0) >= patience {
                break;
            }
        }
    }
    let (best_epoch, holdout_loss) = match best {
        Some((e, h, p)) => {
            params = p;
            (Some(e), Some(h))
        }
        None => (None, (n_hold > 0).then(|| hold_loss(&params))),
    };
    let estimate = SelectionProbEstimate { params, standardizer };
    let holdout_accuracy = (n_hold > 0).then(|| {
        let logits = estimate.params.logits(hold_x.view());
        let correct = logits.iter().zip(&hold_y).filter(|(t, y)| ((**t > 0.0) as u8 as f64) == **y).count();
        correct as f64 / hold_y.len() as f64
    });
    let report = TrainReport {
        final_loss,
        epochs: epochs_run,
        best_epoch,
        holdout_loss,
        steps: adam.t,
        single_label,
        holdout_accuracy,
    };
    Ok((estimate, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal;

    fn random_params(widths: &[usize], seed: u64) -> MlpParams {
        let mut rng = RandomSeed::new(seed).rng();
        let mut p = MlpParams::init(widths, &RandomSeed::new(seed));
        for l in &mut p.layers {
            l.bias.mapv_inplace(|_| 0.3 * standard_normal(&mut rng));
        }
        p
    }

    /// Straight-line re-implementation of the forward pass.
    fn naive_forward(p: &MlpParams, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        for (l, layer) in p.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.weights.ncols()];
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = layer.bias[j];
                for (i, ai) in a.iter().enumerate() {
                    *zj += ai * layer.weights[[i, j]];
                }
                if l + 1 < p.layers.len() {
                    *zj = zj.max(0.0);
                }
            }
            a = z;
        }
        1.0 / (1.0 + (-a[0]).exp())
    }

    #[test]
    fn zero_network_outputs_half() {
        let p = MlpParams::zeros(&[3, 4, 4, 1]);
        let f = forward(&p, &Standardizer::identity(3), &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(f, 0.5);
    }

    #[test]
    fn saturated_bias() {
        let mut p = MlpParams::zeros(&[2, 3, 1]);
        p.layers[1].bias[0] = 30.0;
        let f = forward(&p, &Standardizer::identity(2), &[0.1, 0.2]).unwrap();
        assert!(f > 1.0 - 1e-9);
        assert!(forward(&p, &Standardizer::identity(2), &[0.1]).is_err());
    }

    #[test]
    fn matches_independent_forward() {
        let p = random_params(&[5, 7, 6, 1], 3);
        let std = Standardizer { mean: vec![0.1, -0.2, 0.0, 1.0, 0.5], sd: vec![1.0, 2.0, 0.5, 1.5, 1.0] };
        let mut rng = RandomSeed::new(4).rng();
        for _ in 0..20 {
            let z: Vec<f64> = (0..5).map(|_| standard_normal(&mut rng)).collect();
            let zs: Vec<f64> = z.iter().zip(&std.mean).zip(&std.sd).map(|((v, m), s)| (v - m) / s).collect();
            let f = forward(&p, &std, &z).unwrap();
            assert!((f - naive_forward(&p, &zs)).abs() < 1e-14);
        }
    }

    fn toy_set(dim: usize, n: usize, seed: u64) -> TrainingSet {
        let mut rng = RandomSeed::new(seed).rng();
        let mut ts = TrainingSet::new(dim);
        for i in 0..n {
            let z: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
            ts.push(&z, i % 3 != 0).unwrap();
        }
        ts
    }

    #[test]
    fn half_everywhere_loss_is_n_ln2() {
        let ts = toy_set(3, 37, 1);
        let p = MlpParams::zeros(&[3, 5, 1]);
        let l = loss(&p, &Standardizer::identity(3), &ts).unwrap();
        assert!((l - 37.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_per_row_sum() {
        let ts = toy_set(4, 25, 2);
        let p = random_params(&[4, 6, 1], 5);
        let std = Standardizer::identity(4);
        let total = loss(&p, &std, &ts).unwrap();
        let manual: f64 = (0..ts.len())
            .map(|i| {
                let f = naive_forward(&p, ts.row(i));
                if ts.label(i) { -f.ln() } else { -(1.0 - f).ln() }
            })
            .sum();
        assert!((total - manual).abs() < 1e-10 * manual);
    }

    #[test]
    fn perfect_prediction_loss_vanishes() {
        let mut ts = TrainingSet::new(1);
        for _ in 0..10 {
            ts.push(&[1.0], true).unwrap();
        }
        let mut p = MlpParams::zeros(&[1, 2, 1]);
        p.layers[1].bias[0] = 40.0;
        let l = loss(&p, &Standardizer::identity(1), &ts).unwrap();
        assert!(l <= 10.0 * 1.1e-12);
        let g = backward(&p, &Standardizer::identity(1), &ts).unwrap();
        assert!(g.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.abs() < 1e-12)));
    }

    fn flat(p: &MlpParams) -> Vec<f64> {
        p.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>()).collect()
    }

    fn set_flat(p: &mut MlpParams, k: usize, v: f64) {
        let mut idx = k;
        for l in &mut p.layers {
            if idx < l.weights.len() {
                *l.weights.iter_mut().nth(idx).unwrap() = v;
                return;
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                l.bias[idx] = v;
                return;
            }
            idx -= l.bias.len();
        }
        panic!("index out of range");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let ts = toy_set(3, 12, 8);
        let std = Standardizer::identity(3);
        for point in 0..20 {
            let p = random_params(&[3, 4, 4, 1], 100 + point);
            let g = backward(&p, &std, &ts).unwrap();
            let analytic = flat(&MlpParams { layers: g.layers });
            let base = flat(&p);
            let h = 1e-5;
            let mut max_rel: f64 = 0.0;
            for k in 0..base.len() {
                let mut up = p.clone();
                set_flat(&mut up, k, base[k] + h);
                let mut dn = p.clone();
                set_flat(&mut dn, k, base[k] - h);
                let numeric = (loss(&up, &std, &ts).unwrap() - loss(&dn, &std, &ts).unwrap()) / (2.0 * h);
                let rel = (numeric - analytic[k]).abs() / (numeric.abs() + analytic[k].abs()).max(1e-3);
                max_rel = max_rel.max(rel);
            }
            assert!(max_rel < 1e-5, "point {point}: {max_rel}");
        }
    }

    #[test]
    fn output_bias_gradient_is_residual_sum() {
        let ts = toy_set(3, 30, 9);
        let p = random_params(&[3, 5, 1], 6);
        let std = Standardizer::identity(3);
        let g = backward(&p, &std, &ts).unwrap();
        let resid: f64 = (0..ts.len()).map(|i| naive_forward(&p, ts.row(i)) - ts.label(i) as u8 as f64).sum();
        assert!((g.layers[1].bias[0] - resid).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let mut p = MlpParams::zeros(&[2, 2, 1]);
        let mut g = Gradients { layers: p.layers.iter().map(Layer::zeros_like).collect() };
        g.layers[0].weights[[0, 0]] = 3.0;
        g.layers[0].weights[[1, 1]] = -1e-3;
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut st, &mut p, &g).unwrap();
        assert!((p.layers[0].weights[[0, 0]] + 1e-3).abs() < 1e-9);
        assert!((p.layers[0].weights[[1, 1]] - 1e-3).abs() < 1e-7);
        assert_eq!(p.layers[0].weights[[0, 1]], 0.0);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let p0 = random_params(&[2, 3, 1], 1);
        let mut p = p0.clone();
        let g = Gradients { layers: p.layers.iter().map(Layer::zeros_like).collect() };
        let mut st = AdamState::new(&p, AdamConfig::default());
        for _ in 0..100 {
            adam_step(&mut st, &mut p, &g).unwrap();
        }
        assert_eq!(p, p0);
    }

    #[test]
    fn adam_converges_on_a_quadratic() {
        // minimize (x - 0.3)² through a 1×1 "network"
        let mut p = MlpParams::zeros(&[1, 1]);
        let mut st = AdamState::new(&p, AdamConfig { lr: 0.01, ..AdamConfig::default() });
        for _ in 0..500 {
            let x = p.layers[0].weights[[0, 0]];
            let mut g = Gradients { layers: vec![Layer::zeros(1, 1)] };
            g.layers[0].weights[[0, 0]] = 2.0 * (x - 0.3);
            adam_step(&mut st, &mut p, &g).unwrap();
        }
        assert!((p.layers[0].weights[[0, 0]] - 0.3).abs() < 1e-2);
    }

    fn separable(n: usize, seed: u64) -> TrainingSet {
        let mut rng = RandomSeed::new(seed).rng();
        let mut ts = TrainingSet::new(1);
        for _ in 0..n {
            let z: f64 = standard_normal(&mut rng);
            ts.push(&[z], z > 0.0).unwrap();
        }
        ts
    }

    #[test]
    fn learns_a_separable_rule() {
        let ts = separable(2000, 1);
        let cfg = TrainConfig { hidden: vec![16, 16], epochs: 60, batch: 100, holdout: 0.0, ..TrainConfig::desk() };
        let (est, report) = train(&ts, &cfg, &RandomSeed::new(2)).unwrap();
        assert!(!report.single_label);
        let test = separable(1000, 99);
        let correct = (0..test.len()).filter(|&i| (est.predict(test.row(i)).unwrap() > 0.5) == test.label(i)).count();
        assert!(correct as f64 / 1000.0 > 0.95);
    }

    #[test]
    fn constant_labels_fit_toward_one() {
        let mut ts = TrainingSet::new(2);
        let mut rng = RandomSeed::new(3).rng();
        for _ in 0..200 {
            ts.push(&[standard_normal(&mut rng), standard_normal(&mut rng)], true).unwrap();
        }
        let cfg = TrainConfig { hidden: vec![8], epochs: 1000, batch: 50, ..TrainConfig::desk() };
        let (est, report) = train(&ts, &cfg, &RandomSeed::new(1)).unwrap();
        assert!(report.single_label);
        for i in 0..ts.len() {
            let p = est.predict(ts.row(i)).unwrap();
            assert!(p > 0.97 && p < 1.0);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let ts = separable(300, 4);
        let cfg = TrainConfig { hidden: vec![8, 8], epochs: 5, batch: 64, holdout: 0.2, ..TrainConfig::desk() };
        let (a, ra) = train(&ts, &cfg, &RandomSeed::new(5)).unwrap();
        let (b, rb) = train(&ts, &cfg, &RandomSeed::new(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert!(ra.holdout_accuracy.is_some());
    }

    #[test]
    fn early_stopping_keeps_the_best_epoch() {
        // labels independent of the input: the holdout loss soon stops improving
        let mut rng = RandomSeed::new(6).rng();
        let mut ts = TrainingSet::new(4);
        for _ in 0..400 {
            let z: Vec<f64> = (0..4).map(|_| standard_normal(&mut rng)).collect();
            ts.push(&z, rng.random_bool(0.5)).unwrap();
        }
        let cfg = TrainConfig { hidden: vec![32, 32], epochs: 2000, batch: 50, holdout: 0.25, patience: Some(10), ..TrainConfig::desk() };
        let (_, report) = train(&ts, &cfg, &RandomSeed::new(7)).unwrap();
        let best = report.best_epoch.unwrap();
        assert_eq!(report.epochs, best + 11);
        assert!(report.holdout_loss.unwrap().is_finite());

        let no_holdout = TrainConfig { holdout: 0.0, epochs: 3, ..cfg };
        let (_, report) = train(&ts, &no_holdout, &RandomSeed::new(7)).unwrap();
        assert_eq!((report.epochs, report.best_epoch, report.holdout_loss), (3, None, None));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let est = SelectionProbEstimate {
            params: random_params(&[3, 4, 1], 11),
            standardizer: Standardizer { mean: vec![0.1, 1.0 / 3.0, -2.0], sd: vec![1e-12, 0.7, 2.0] },
        };
        let back = SelectionProbEstimate::from_text(&est.to_text()).unwrap();
        assert_eq!(back, est);
        assert!(SelectionProbEstimate::from_text("nonsense").is_err());
        let truncated: String = est.to_text().lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(SelectionProbEstimate::from_text(&truncated).is_err());
    }
}
