use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::GridSpec;
use crate::mlp::TrainConfig;
use crate::pipeline::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Dtl,
    Lasso,
    Bh,
    Repeated,
    Diagnose,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dtl => "dtl",
            Self::Lasso => "lasso",
            Self::Bh => "bh",
            Self::Repeated => "repeated",
            Self::Diagnose => "diagnose",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dtl" => Self::Dtl,
            "lasso" => Self::Lasso,
            "bh" => Self::Bh,
            "repeated" => Self::Repeated,
            "diagnose" => Self::Diagnose,
            _ => return Err(Error::Config(format!("unknown experiment {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            _ => Err(Error::Config(format!("unknown scale {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::Config(format!("unknown format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DtlParams {
    pub k: usize,
    pub n1: usize,
    pub n2: usize,
    /// Common mean of every arm.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoParams {
    pub n: usize,
    pub p: usize,
    pub sparsity: usize,
    pub c0: f64,
    pub rho: f64,
    /// Share of rows given to the lasso.
    pub frac: f64,
    /// Penalty; `None` means `√(log p / n)`.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BhParams {
    pub k: usize,
    pub n: usize,
    pub theta0: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatedParams {
    pub init: usize,
    pub step: usize,
    pub alpha0: f64,
    pub effect: f64,
    pub max_stages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub scale: Scale,
    pub replicates: usize,
    pub boot: usize,
    pub epochs: usize,
    pub batch: usize,
    pub hidden: Vec<usize>,
    /// Share of training rows held out for early stopping; 0 trains for the
    /// full epoch budget.
    pub holdout: f64,
    pub patience: usize,
    pub grid_points: usize,
    pub grid_span: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Pivots drawn by the diagnose experiment.
    pub pivots: usize,
    pub dtl: DtlParams,
    pub lasso: LassoParams,
    pub bh: BhParams,
    pub repeated: RepeatedParams,
}

impl ExperimentConfig {
    /// 100 replicates, B = 1000, at most 500 epochs, 64-64-64 network,
    /// early stopping on a 20% holdout.
    pub fn desk(experiment: ExperimentKind) -> Self {
        let train = TrainConfig::desk();
        Self {
            experiment,
            scale: Scale::Desk,
            replicates: 100,
            boot: 1000,
            epochs: train.epochs,
            batch: train.batch,
            hidden: train.hidden,
            holdout: train.holdout,
            patience: train.patience.unwrap_or(30),
            grid_points: 100,
            grid_span: 10.0,
            alpha: 0.1,
            seed: 1,
            pivots: 300,
            dtl: DtlParams { k: 50, n1: 100, n2: 25, theta: 0.0 },
            lasso: LassoParams { n: 400, p: 50, sparsity: 10, c0: 0.9, rho: 0.3, frac: 0.8, lambda: None },
            bh: BhParams { k: 20, n: 300, theta0: 0.1, q: 0.2 },
            repeated: RepeatedParams { init: 100, step: 50, alpha0: 0.1, effect: 0.0, max_stages: 20 },
        }
    }

    /// 200 replicates, B = 3000, 3000 epochs, 200-200-200 network, no holdout.
    pub fn paper(experiment: ExperimentKind) -> Self {
        let train = TrainConfig::paper();
        Self {
            scale: Scale::Paper,
            replicates: 200,
            boot: 3000,
            epochs: train.epochs,
            hidden: train.hidden,
            holdout: train.holdout,
            ..Self::desk(experiment)
        }
    }

    pub fn for_scale(experiment: ExperimentKind, scale: Scale) -> Self {
        match scale {
            Scale::Desk => Self::desk(experiment),
            Scale::Paper => Self::paper(experiment),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            boot: self.boot,
            train: TrainConfig {
                hidden: self.hidden.clone(),
                epochs: self.epochs,
                batch: self.batch,
                holdout: self.holdout,
                patience: (self.holdout > 0.0).then_some(self.patience),
                ..TrainConfig::paper()
            },
            grid: self.grid(),
            balance_frac: 0.2,
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec { points: self.grid_points, span: self.grid_span }
    }

    /// The parameter varied across runs of this experiment, as `key=value`.
    pub fn scenario_param(&self) -> String {
        match self.experiment {
            ExperimentKind::Dtl | ExperimentKind::Diagnose => format!("n1={}", self.dtl.n1),
            ExperimentKind::Lasso => format!("c0={}", self.lasso.c0),
            ExperimentKind::Bh => format!("theta0={}", self.bh.theta0),
            ExperimentKind::Repeated => format!("effect={}", self.repeated.effect),
        }
    }

    /// Sets one field from its `key=value` spelling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value.trim().parse().map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
        }
        let v = value.trim();
        match key.trim() {
            "experiment" => self.experiment = v.parse()?,
            "scale" => self.scale = v.parse()?,
            "replicates" => self.replicates = num(key, v)?,
            "boot" => self.boot = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch" => self.batch = num(key, v)?,
            "hidden" => {
                self.hidden = v.split(',').map(|w| num(key, w)).collect::<Result<_>>()?;
            }
            "holdout" => self.holdout = num(key, v)?,
            "patience" => self.patience = num(key, v)?,
            "grid_points" => self.grid_points = num(key, v)?,
            "grid_span" => self.grid_span = num(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "pivots" => self.pivots = num(key, v)?,
            "k" => {
                let k = num(key, v)?;
                self.dtl.k = k;
                self.bh.k = k;
            }
            "n1" => {
                self.dtl.n1 = num(key, v)?;
                self.dtl.n2 = self.dtl.n1 / 4;
            }
            "n2" => self.dtl.n2 = num(key, v)?,
            "theta" => self.dtl.theta = num(key, v)?,
            "n" => {
                let n = num(key, v)?;
                self.lasso.n = n;
                self.bh.n = n;
            }
            "p" => self.lasso.p = num(key, v)?,
            "sparsity" => self.lasso.sparsity = num(key, v)?,
            "c0" => self.lasso.c0 = num(key, v)?,
            "rho" => self.lasso.rho = num(key, v)?,
            "frac" => self.lasso.frac = num(key, v)?,
            "lambda" => self.lasso.lambda = Some(num(key, v)?),
            "theta0" => self.bh.theta0 = num(key, v)?,
            "q" => self.bh.q = num(key, v)?,
            "init" => self.repeated.init = num(key, v)?,
            "step" => self.repeated.step = num(key, v)?,
            "alpha0" => self.repeated.alpha0 = num(key, v)?,
            "effect" => self.repeated.effect = num(key, v)?,
            "max_stages" => self.repeated.max_stages = num(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.replicates == 0 {
            return fail("replicates must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("alpha must lie in (0, 1)");
        }
        if self.boot < 2 {
            return fail("boot must be at least 2");
        }
        if self.batch == 0 || self.hidden.iter().any(|&w| w == 0) {
            return fail("batch size and layer widths must be positive");
        }
        if !(0.0..0.9).contains(&self.holdout) || (self.holdout > 0.0 && self.patience == 0) {
            return fail("holdout must lie in [0, 0.9) and patience must be positive");
        }
        if self.grid_points < 2 || !(self.grid_span > 0.0) {
            return fail("grid needs at least two points and a positive span");
        }
        if self.dtl.k < 2 || self.dtl.n1 < 2 || self.dtl.n2 < 2 {
            return fail("dtl needs k ≥ 2 arms and at least two observations per stage");
        }
        let l = &self.lasso;
        if l.p == 0 || l.sparsity > l.p || !(l.frac > 0.0 && l.frac < 1.0) || !(l.rho.abs() < 1.0) {
            return fail("invalid lasso scenario");
        }
        if ((l.n as f64 * l.frac).floor() as usize) < 2 || l.n - ((l.n as f64 * l.frac).floor() as usize) <= l.p {
            return fail("lasso needs more held-out rows than features");
        }
        if self.bh.k == 0 || self.bh.n == 0 || !(self.bh.q > 0.0 && self.bh.q < 1.0) {
            return fail("invalid bh scenario");
        }
        let r = &self.repeated;
        if r.init < 2 || r.step == 0 || r.max_stages == 0 || !(r.alpha0 > 0.0 && r.alpha0 < 1.0) {
            return fail("invalid repeated-testing scenario");
        }
        Ok(())
    }

    /// Parses flat `key = value` text; blank lines and `#` comments are skipped.
    pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
        text.lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| Error::Config(format!("expected key=value, got {l:?}")))
            })
            .collect()
    }
}
