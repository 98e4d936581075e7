//! Data generation and per-replicate intervals for each experiment.

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::Rng as _;

use super::config::{BhParams, DtlParams, ExperimentConfig, LassoParams, RepeatedParams};
use super::records::{IntervalRecord, Method};
use crate::data::Dataset;
use crate::dist::{norm_quantile, student_t_quantile};
use crate::error::{Error, Result};
use crate::inference::{ConditionalLaw, Interval, LawInputs};
use crate::linalg;
use crate::oracle::{marginal_ci, tn_ci, DtlInstance};
use crate::pipeline::fit_black_box;
use crate::rng::{standard_normal, RandomSeed};
use crate::select::{BhSelector, CarveSelector, DtlSelector, ModelId, RepeatedTestSelector, SelectionAux, Selector};

// Stream families inside one replicate.
const SIMULATE: u64 = 1;
const SELECT: u64 = 2;
const FIT: u64 = 3;

fn normals(rng: &mut crate::rng::Rng, n: usize, mean: f64) -> Vec<f64> {
    (0..n).map(|_| mean + standard_normal(rng)).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

/// Treats "nothing selected" as a rejected draw and passes other errors on.
fn selected<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::NothingSelected(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Simulated two-stage drop-the-losers data; returns the dataset and the
/// winner's second-stage mean.
pub fn simulate_dtl(p: &DtlParams, seed: &RandomSeed) -> Result<(Dataset, f64)> {
    let mut rng = seed.rng();
    let groups: Vec<Vec<f64>> = (0..p.k).map(|_| normals(&mut rng, p.n1, p.theta)).collect();
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let ModelId::Winner(k) = crate::select::dtl_select(&means)? else { unreachable!() };
    let second = normals(&mut rng, p.n2, p.theta);
    let ybar = mean(&second);
    Ok((Dataset::grouped(groups)?.with_followup(k, second)?, ybar))
}

pub fn dtl_replicate(cfg: &ExperimentConfig, replicate: usize, seed: &RandomSeed) -> Result<Option<Vec<IntervalRecord>>> {
    let p = &cfg.dtl;
    let (data, ybar) = simulate_dtl(p, &seed.derive(SIMULATE))?;
    let Dataset::Grouped { groups, followup: Some(f) } = &data else { unreachable!() };
    let k = f.group;
    let truth = p.theta;
    let alpha = cfg.alpha;
    let mut omega = seed.derive(SELECT).rng();
    let plain = DtlSelector { marginalize: false };
    let marg = DtlSelector { marginalize: true };
    let obs_plain = plain.run(&data, None, &mut omega)?;
    let obs_marg = marg.run(&data, None, &mut omega)?;
    let theta_hat = obs_plain.theta_hat[0];
    let pooled: Vec<f64> = groups[k].iter().chain(&f.values).copied().collect();
    let s_hat = sample_sd(&pooled);
    let z = norm_quantile(1.0 - alpha / 2.0);
    let rec = |m, est, iv| IntervalRecord::new(m, replicate, 0, est, iv, truth);

    let naive_half = z * s_hat / ((p.n1 + p.n2) as f64).sqrt();
    let split_half = z * s_hat / (p.n2 as f64).sqrt();
    let mut out = vec![
        rec(Method::Naive, theta_hat, Interval::new(theta_hat - naive_half, theta_hat + naive_half)),
        rec(Method::Splitting, ybar, Interval::new(ybar - split_half, ybar + split_half)),
    ];
    let pipe = cfg.pipeline();
    let fit_seed = seed.derive(FIT);
    let bb = fit_black_box(&data, &plain, &obs_plain, &pipe, &fit_seed)?.infer(0, alpha, pipe.grid)?;
    out.push(rec(Method::Bb, theta_hat, bb.interval));
    let bbm = fit_black_box(&data, &marg, &obs_marg, &pipe, &fit_seed)?.infer(0, alpha, pipe.grid)?;
    out.push(rec(Method::BbMarginalized, theta_hat, bbm.interval));
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let inst = DtlInstance::new(&means, ybar, p.n1, p.n2)?;
    out.push(rec(Method::AnalyticTn, theta_hat, tn_ci(&inst, alpha)?));
    out.push(rec(Method::AnalyticMarginal, theta_hat, marginal_ci(&inst, alpha)?));
    Ok(Some(out))
}

/// `0.3^{|i−j|}`-style autoregressive covariance.
pub fn ar_covariance(p: usize, rho: f64) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(i, j)| rho.powi((i as i32 - j as i32).abs()))
}

/// Simulated regression with `sparsity` coefficients of size
/// `√(2 c₀ log p / n)` at random positions with random signs.
pub fn simulate_lasso(p: &LassoParams, seed: &RandomSeed) -> Result<(Dataset, Vec<f64>)> {
    let mut rng = seed.rng();
    let chol = linalg::cholesky(ar_covariance(p.p, p.rho).view())?;
    let size = (2.0 * p.c0 * (p.p as f64).ln() / p.n as f64).sqrt();
    let mut beta = vec![0.0; p.p];
    for j in index::sample(&mut rng, p.p, p.sparsity) {
        beta[j] = if rng.random::<bool>() { size } else { -size };
    }
    let z = Array2::from_shape_fn((p.n, p.p), |_| standard_normal(&mut rng));
    let x = z.dot(&chol.t());
    let signal = x.dot(&Array1::from(beta.clone()));
    let y: Vec<f64> = signal.iter().map(|s| s + standard_normal(&mut rng)).collect();
    Ok((Dataset::regression(x, y)?, beta))
}

/// Population least-squares coefficients on `support`: `Σ_MM⁻¹ Σ_{M·} β`.
pub fn projection_target(cov: &Array2<f64>, beta: &[f64], support: &[usize]) -> Result<Vec<f64>> {
    let s = support.len();
    let sub = Array2::from_shape_fn((s, s), |(a, b)| cov[[support[a], support[b]]]);
    let rhs: Vec<f64> = support.iter().map(|&i| (0..beta.len()).map(|j| cov[[i, j]] * beta[j]).sum()).collect();
    linalg::solve_spd(sub.view(), &rhs)
}

/// Wald intervals from least squares on `rows` restricted to `support`.
fn ols_wald(x: &Array2<f64>, y: &[f64], rows: &[usize], support: &[usize], alpha: f64) -> Result<Vec<(f64, Interval)>> {
    let xs = x.select(ndarray::Axis(0), rows);
    let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let (coef, inv) = linalg::ols(xs.view(), &ys, support)?;
    let df = rows.len() as f64 - support.len() as f64;
    if df < 1.0 {
        return Err(Error::InvalidData("no residual degrees of freedom".into()));
    }
    let rss: f64 = (0..rows.len())
        .map(|r| {
            let fit: f64 = support.iter().zip(&coef).map(|(&j, c)| xs[[r, j]] * c).sum();
            (ys[r] - fit).powi(2)
        })
        .sum();
    let sigma2 = rss / df;
    let z = norm_quantile(1.0 - alpha / 2.0);
    Ok(coef
        .iter()
        .enumerate()
        .map(|(a, &c)| {
            let h = z * (sigma2 * inv[[a, a]]).sqrt();
            (c, Interval::new(c - h, c + h))
        })
        .collect())
}

pub fn lasso_lambda(p: &LassoParams) -> f64 {
    p.lambda.unwrap_or_else(|| ((p.p as f64).ln() / p.n as f64).sqrt())
}

pub fn lasso_replicate(cfg: &ExperimentConfig, replicate: usize, seed: &RandomSeed) -> Result<Option<Vec<IntervalRecord>>> {
    let p = &cfg.lasso;
    let (data, beta) = simulate_lasso(p, &seed.derive(SIMULATE))?;
    let selector = CarveSelector { frac: p.frac, lambda: lasso_lambda(p) };
    let Some(obs) = selected(selector.run(&data, None, &mut seed.derive(SELECT).rng()))? else {
        return Ok(None);
    };
    let (ModelId::Support(support), SelectionAux::Carve { subset }) = (&obs.model, &obs.aux) else { unreachable!() };
    let Dataset::Regression { x, y } = &data else { unreachable!() };
    let truth = projection_target(&ar_covariance(p.p, p.rho), &beta, support)?;
    let alpha = cfg.alpha;
    let mut out = Vec::new();
    let all: Vec<usize> = (0..y.len()).collect();
    for (t, (est, iv)) in ols_wald(x, y, &all, support, alpha)?.into_iter().enumerate() {
        out.push(IntervalRecord::new(Method::Naive, replicate, t, est, iv, truth[t]));
    }
    let holdout: Vec<usize> = all.iter().copied().filter(|i| subset.binary_search(i).is_err()).collect();
    if holdout.len() > support.len() {
        for (t, (est, iv)) in ols_wald(x, y, &holdout, support, alpha)?.into_iter().enumerate() {
            out.push(IntervalRecord::new(Method::Splitting, replicate, t, est, iv, truth[t]));
        }
    }
    let pipe = cfg.pipeline();
    let fit = fit_black_box(&data, &selector, &obs, &pipe, &seed.derive(FIT))?;
    for (t, inf) in fit.infer_all(alpha, pipe.grid)?.into_iter().enumerate() {
        out.push(IntervalRecord::new(Method::Bb, replicate, t, inf.theta_hat, inf.interval, truth[t]));
    }
    Ok(Some(out))
}

/// Group means `θ₀` for the first four arms, `−θ₀` for the next four, zero after.
pub fn bh_truth(p: &BhParams) -> Vec<f64> {
    (0..p.k)
        .map(|k| match k {
            0..=3 => p.theta0,
            4..=7 => -p.theta0,
            _ => 0.0,
        })
        .collect()
}

pub fn simulate_bh(p: &BhParams, seed: &RandomSeed) -> Result<Dataset> {
    let mut rng = seed.rng();
    Dataset::grouped(bh_truth(p).into_iter().map(|m| normals(&mut rng, p.n, m)).collect())
}

pub fn bh_replicate(cfg: &ExperimentConfig, replicate: usize, seed: &RandomSeed) -> Result<Option<Vec<IntervalRecord>>> {
    let p = &cfg.bh;
    let data = simulate_bh(p, &seed.derive(SIMULATE))?;
    let selector = BhSelector { q: p.q };
    let Some(obs) = selected(selector.run(&data, None, &mut seed.derive(SELECT).rng()))? else {
        return Ok(None);
    };
    let ModelId::RejectionSet(rejected) = &obs.model else { unreachable!() };
    let Dataset::Grouped { groups, .. } = &data else { unreachable!() };
    let truth = bh_truth(p);
    let z = norm_quantile(1.0 - cfg.alpha / 2.0);
    let mut out = Vec::new();
    for (t, &k) in rejected.iter().enumerate() {
        let m = mean(&groups[k]);
        let h = z * sample_sd(&groups[k]) / (p.n as f64).sqrt();
        out.push(IntervalRecord::new(Method::Naive, replicate, t, m, Interval::new(m - h, m + h), truth[k]));
    }
    let pipe = cfg.pipeline();
    let fit = fit_black_box(&data, &selector, &obs, &pipe, &seed.derive(FIT))?;
    // group means are independent, so each rejected mean moves only its own coordinate
    for (t, &k) in rejected.iter().enumerate() {
        let inputs = LawInputs::basis_coordinate(&obs.basis, k, fit.decomposition.variance(t))?;
        let interval = ConditionalLaw::build(&fit.estimate, &inputs, pipe.grid)?.invert_ci(inputs.theta_hat, cfg.alpha)?;
        out.push(IntervalRecord::new(Method::Bb, replicate, t, inputs.theta_hat, interval, truth[k]));
    }
    Ok(Some(out))
}

/// All `max_stages` blocks for both arms; the first block has `init`
/// observations per arm and every later one `step`.
pub fn simulate_repeated(p: &RepeatedParams, seed: &RandomSeed) -> Result<Dataset> {
    let mut rng = seed.rng();
    let mut arm_a = Vec::with_capacity(p.max_stages);
    let mut arm_b = Vec::with_capacity(p.max_stages);
    for t in 0..p.max_stages {
        let n = if t == 0 { p.init } else { p.step };
        arm_a.push(normals(&mut rng, n, p.effect));
        arm_b.push(normals(&mut rng, n, 0.0));
    }
    Dataset::staged(arm_a, arm_b)
}

pub fn repeated_replicate(cfg: &ExperimentConfig, replicate: usize, seed: &RandomSeed) -> Result<Option<Vec<IntervalRecord>>> {
    let p = &cfg.repeated;
    let full = simulate_repeated(p, &seed.derive(SIMULATE))?;
    let selector = RepeatedTestSelector { alpha0: p.alpha0, max_stages: p.max_stages };
    let Some(first) = selected(selector.run(&full, None, &mut seed.derive(SELECT).rng()))? else {
        return Ok(None);
    };
    let ModelId::StoppedAt(stop) = first.model else { unreachable!() };
    // only the data gathered up to the stopping stage is kept
    let Dataset::StagedTwoSample { arm_a, arm_b } = &full else { unreachable!() };
    let data = Dataset::staged(arm_a[..stop].to_vec(), arm_b[..stop].to_vec())?;
    let obs = selector.run(&data, None, &mut seed.derive(SELECT).rng())?;
    let a: Vec<f64> = arm_a[..stop].concat();
    let b: Vec<f64> = arm_b[..stop].concat();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let ss = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
    };
    let pooled = (ss(&a) + ss(&b)) / df;
    let est = mean(&a) - mean(&b);
    let h = student_t_quantile(1.0 - cfg.alpha / 2.0, df) * (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let mut out = vec![IntervalRecord::new(Method::Naive, replicate, 0, est, Interval::new(est - h, est + h), p.effect)];
    let pipe = cfg.pipeline();
    let inf = fit_black_box(&data, &selector, &obs, &pipe, &seed.derive(FIT))?.infer(0, cfg.alpha, pipe.grid)?;
    out.push(IntervalRecord::new(Method::Bb, replicate, 0, inf.theta_hat, inf.interval, p.effect));
    Ok(Some(out))
}
