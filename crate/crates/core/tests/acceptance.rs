//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary so the lines are always printed. Numeric
//! arguments select a subset: `cargo test --test acceptance -- 4 8`.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng as _;
use selective::data::Dataset;
use selective::harness::emit::emit;
use selective::harness::scenarios::{simulate_dtl, simulate_repeated};
use selective::harness::{run_diagnosis, run_experiment, ExperimentConfig, ExperimentKind, ExperimentOutput, Method, OutputFormat};
use selective::inference::{ConditionalLaw, ConstantProbability, FnProbability, GridSpec, Interval, LawInputs};
use selective::mlp::{backward, loss, train, MlpParams, Standardizer, TrainConfig};
use selective::oracle::{marginal_cdf, marginal_lower_bound, one_sided_length_bound, tn_cdf, tn_ci, tn_pvalue, tn_sf, DtlInstance};
use selective::pipeline::fit_black_box;
use selective::rng::standard_normal;
use selective::select::{bh_select, lasso_cd, repeated_test_run, DtlSelector, ModelId, Selector};
use selective::training::TrainingSet;
use selective::RandomSeed;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(checks: &[(bool, String)]) -> Self {
        Self {
            pass: checks.iter().all(|c| c.0),
            detail: checks.iter().map(|c| c.1.as_str()).collect::<Vec<_>>().join("; "),
        }
    }
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v)
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn coverage(out: &ExperimentOutput, method: Method) -> f64 {
    out.results.iter().find(|r| r.method == method).map_or(f64::NAN, |r| r.coverage)
}

// ---------------------------------------------------------------- 1

fn learned_marginal_matches_closed_form() -> Outcome {
    let cfg = ExperimentConfig::desk(ExperimentKind::Dtl);
    let seed = RandomSeed::new(2024);
    let (data, _) = simulate_dtl(&cfg.dtl, &seed.derive(1)).unwrap();
    let selector = DtlSelector { marginalize: true };
    let observed = selector.run(&data, None, &mut seed.derive(2).rng()).unwrap();
    let fit = fit_black_box(&data, &selector, &observed, &cfg.pipeline(), &seed.derive(3)).unwrap();
    let law = fit.law(0, cfg.grid()).unwrap();

    let Dataset::Grouped { groups, followup: Some(f) } = &data else { unreachable!() };
    let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let second = f.values.iter().sum::<f64>() / f.values.len() as f64;
    let mut inst = DtlInstance::new(&means, second, cfg.dtl.n1, cfg.dtl.n2).unwrap();
    assert!((inst.theta_hat - law.theta_hat_obs).abs() < 1e-12);
    // same variance estimate as the pipeline, so only π̂ differs
    let ratio = law.sigma2 / inst.sigma2;
    inst.sigma2 = law.sigma2;
    inst.s2 *= ratio;

    let h = law.spacing();
    let sup = |theta: f64| {
        law.grid
            .iter()
            .map(|&x| (law.cdf(theta, x + h / 2.0) - marginal_cdf(&inst, theta, x + h / 2.0).unwrap()).abs())
            .fold(0.0, f64::max)
    };
    let (at_truth, at_estimate) = (sup(0.0), sup(inst.theta_hat));
    Outcome::new(&[(
        at_truth <= 0.05,
        format!("sup error at theta=0 is {at_truth:.4} (limit 0.05); at theta_hat {at_estimate:.4}; sigma ratio {ratio:.3}"),
    )])
}

// ---------------------------------------------------------------- 2, 3

fn dtl_run() -> &'static ExperimentOutput {
    static OUT: OnceLock<ExperimentOutput> = OnceLock::new();
    OUT.get_or_init(|| run_experiment(&ExperimentConfig::desk(ExperimentKind::Dtl)).unwrap())
}

fn dtl_coverage() -> Outcome {
    let out = dtl_run();
    let c = |m| coverage(out, m);
    let (bb, marg, naive, split) = (c(Method::Bb), c(Method::BbMarginalized), c(Method::Naive), c(Method::Splitting));
    Outcome::new(&[
        (within(bb, 0.83, 0.97), format!("bb {bb:.2}")),
        (within(marg, 0.83, 0.97), format!("bb_marginalized {marg:.2}")),
        (naive < 0.8, format!("naive {naive:.2}")),
        (within(split, 0.83, 0.97), format!("splitting {split:.2}")),
    ])
}

fn dtl_length_ordering() -> Outcome {
    let out = dtl_run();
    let lengths = |m: Method| -> HashMap<usize, f64> {
        out.records.iter().filter(|r| r.method == m).map(|r| (r.replicate, r.length())).collect()
    };
    let marg = lengths(Method::BbMarginalized);
    let paired = |other: Method, name: &str| {
        let other = lengths(other);
        let diffs: Vec<f64> = marg.iter().map(|(r, l)| l - other[r]).collect();
        let (m, se) = mean_se(&diffs);
        (m + se < 0.0, format!("marginalized - {name}: {m:.4} (se {se:.4})"))
    };
    Outcome::new(&[paired(Method::Bb, "bb"), paired(Method::Splitting, "splitting")])
}

// ---------------------------------------------------------------- 4

fn draw_dtl(rng: &mut impl rand::Rng, theta: f64, k: usize, n1: usize, n2: usize) -> DtlInstance {
    let first: Vec<f64> = (0..k).map(|_| theta + standard_normal(rng) / (n1 as f64).sqrt()).collect();
    let second = theta + standard_normal(rng) / (n2 as f64).sqrt();
    DtlInstance::new(&first, second, n1, n2).unwrap()
}

/// Upper-tail frequency of `x` under rejection sampling from the
/// truncated normal.
fn tn_tail_mc(rng: &mut impl rand::Rng, theta: f64, sigma: f64, lower: f64, x: f64, draws: usize) -> f64 {
    let mut kept = 0;
    let mut above = 0;
    while kept < draws {
        let v = theta + sigma * standard_normal(rng);
        if v > lower {
            kept += 1;
            above += (v >= x) as usize;
        }
    }
    above as f64 / draws as f64
}

fn truncated_normal_suite() -> Outcome {
    let mut rng = RandomSeed::new(40).rng();
    let draws = 1_000_000;
    let mut checks = Vec::new();
    // (θ, σ, truncation point a − b, evaluation point)
    for &(theta, sigma, lower, x) in
        &[(0.0, 1.0, 0.0, 0.5), (0.0, 1.0, -1.0, 0.3), (0.5, 2.0, 1.0, 3.0), (-1.0, 0.5, -1.5, -0.8), (0.0, 1.0, 1.0, 1.8)]
    {
        let exact = tn_sf(theta, sigma, lower, x).unwrap();
        let mc = tn_tail_mc(&mut rng, theta, sigma, lower, x, draws);
        let se = (exact * (1.0 - exact) / draws as f64).sqrt();
        let z = (mc - exact) / se;
        checks.push((z.abs() <= 3.0, format!("tail({theta},{lower}) z={z:.2}")));
    }

    // the interval ends are where the observed value sits at the α/2 quantiles
    let inst = DtlInstance::new(&[0.3, 0.1, 0.0, -0.1, -0.2], 0.25, 100, 25).unwrap();
    let pvalue = tn_pvalue(&inst, 0.0).unwrap();
    let ci = tn_ci(&inst, 0.1).unwrap();
    for (theta, target) in [(0.0, pvalue), (ci.lower, 0.05), (ci.upper, 0.95)] {
        let mc = tn_tail_mc(&mut rng, theta, inst.sigma(), inst.threshold, inst.theta_hat, draws);
        let se = (target * (1.0 - target) / draws as f64).sqrt();
        let z = (mc - target) / se;
        checks.push((z.abs() <= 3.0, format!("tail at theta={theta:.3} z={z:.2}")));
    }

    let covered = (0..2000).filter(|_| tn_ci(&draw_dtl(&mut rng, 0.0, 50, 100, 25), 0.1).unwrap().covers(0.0)).count();
    let cov = covered as f64 / 2000.0;
    checks.push((within(cov, 0.88, 0.92), format!("coverage {cov:.3}")));
    Outcome::new(&checks)
}

// ---------------------------------------------------------------- 5

fn marginal_length_bound() -> Outcome {
    let mut rng = RandomSeed::new(50).rng();
    let (n2, alpha) = (25, 0.1);
    let lengths: Vec<f64> = (0..2000)
        .map(|_| {
            let (lower, median) = marginal_lower_bound(&draw_dtl(&mut rng, 0.0, 50, 100, n2), alpha).unwrap();
            median - lower
        })
        .collect();
    let (m, se) = mean_se(&lengths);
    let bound = one_sided_length_bound(n2, alpha);
    Outcome::new(&[(m <= bound + 3.0 * se, format!("mean length {m:.4} (se {se:.4}) vs bound {bound:.4}"))])
}

// ---------------------------------------------------------------- 6

fn diagnostic_discrimination() -> Outcome {
    let d = run_diagnosis(&ExperimentConfig::desk(ExperimentKind::Diagnose)).unwrap();
    let (adj, unadj) = (d.ks_adjusted(), d.ks_unadjusted());
    Outcome::new(&[
        (d.adjusted.accepted == 300, format!("{} pivots", d.adjusted.accepted)),
        (adj < 0.10, format!("KS adjusted {adj:.3}")),
        (unadj >= adj + 0.05, format!("KS unadjusted {unadj:.3}")),
    ])
}

// ---------------------------------------------------------------- 7

fn flat_params(p: &MlpParams) -> Vec<f64> {
    p.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>()).collect()
}

fn nudge(p: &MlpParams, k: usize, by: f64) -> MlpParams {
    let mut q = p.clone();
    let mut idx = k;
    for l in &mut q.layers {
        let n = l.weights.len();
        if idx < n {
            *l.weights.iter_mut().nth(idx).unwrap() += by;
            return q;
        }
        idx -= n;
        if idx < l.bias.len() {
            l.bias[idx] += by;
            return q;
        }
        idx -= l.bias.len();
    }
    unreachable!()
}

fn learner_checks() -> Outcome {
    let mut rng = RandomSeed::new(70).rng();
    let mut toy = TrainingSet::new(3);
    for _ in 0..40 {
        let z: Vec<f64> = (0..3).map(|_| standard_normal(&mut rng)).collect();
        toy.push(&z, rng.random_bool(0.4)).unwrap();
    }
    let std = Standardizer::identity(3);
    let mut worst: f64 = 0.0;
    for (i, widths) in [vec![3, 5, 1], vec![3, 4, 4, 1], vec![3, 8, 3, 2, 1]].iter().enumerate() {
        let mut p = MlpParams::init(widths, &RandomSeed::new(100 + i as u64));
        // nonzero biases keep pre-activations off the ReLU kink
        for l in &mut p.layers {
            l.bias.mapv_inplace(|_| 0.3 * standard_normal(&mut rng));
        }
        let analytic = flat_params(&MlpParams { layers: backward(&p, &std, &toy).unwrap().layers });
        let h = 1e-5;
        for (k, a) in analytic.iter().enumerate() {
            let num = (loss(&nudge(&p, k, h), &std, &toy).unwrap() - loss(&nudge(&p, k, -h), &std, &toy).unwrap()) / (2.0 * h);
            worst = worst.max((num - a).abs() / (num.abs() + a.abs()).max(1e-3));
        }
    }

    let n = toy.len() as f64;
    let half = loss(&MlpParams::zeros(&[3, 6, 1]), &std, &toy).unwrap();
    // summing n copies of ln 2 can differ from n·ln 2 by rounding only
    let half_err = (half - n * std::f64::consts::LN_2).abs();

    let separable = |n: usize, seed: u64| {
        let mut rng = RandomSeed::new(seed).rng();
        let mut ts = TrainingSet::new(1);
        for _ in 0..n {
            let z = standard_normal(&mut rng);
            ts.push(&[z], z > 0.3).unwrap();
        }
        ts
    };
    let cfg = TrainConfig { hidden: vec![16, 16], epochs: 100, batch: 100, ..TrainConfig::desk() };
    let (est, _) = train(&separable(2000, 71), &cfg, &RandomSeed::new(72)).unwrap();
    let test = separable(2000, 73);
    let acc = (0..test.len()).filter(|&i| (est.predict(test.row(i)).unwrap() > 0.5) == test.label(i)).count() as f64
        / test.len() as f64;

    Outcome::new(&[
        (worst < 1e-5, format!("gradient rel err {worst:.1e}")),
        (half_err <= 4.0 * n * f64::EPSILON * n, format!("CE at 0.5 off by {half_err:.1e}")),
        (acc > 0.95, format!("held-out accuracy {acc:.3}")),
    ])
}

// ---------------------------------------------------------------- 8

fn exponential_family_properties() -> Outcome {
    let mut rng = RandomSeed::new(80).rng();
    let mut monotone = true;
    for _ in 0..100 {
        let points = rng.random_range(5..150);
        let start = rng.random_range(-5.0..5.0);
        let mut x = start;
        let grid: Vec<f64> = (0..points)
            .map(|_| {
                x += rng.random_range(0.01..0.5);
                x
            })
            .collect();
        let log_pi: Vec<f64> = grid.iter().map(|_| if rng.random_bool(0.1) { f64::NEG_INFINITY } else { rng.random_range(-8.0..0.0) }).collect();
        let Ok(law) = ConditionalLaw::from_parts(grid.clone(), log_pi, rng.random_range(0.05..4.0), start) else { continue };
        let probe: Vec<f64> = (0..40).map(|i| grid[0] - 1.0 + i as f64 * (grid[points - 1] - grid[0] + 2.0) / 39.0).collect();
        let theta = rng.random_range(-3.0..3.0);
        monotone &= probe.windows(2).all(|w| law.cdf(theta, w[0]) <= law.cdf(theta, w[1]) + 1e-12);
        let x = probe[rng.random_range(0..40)];
        let thetas: Vec<f64> = (0..30).map(|i| -6.0 + 0.4 * i as f64).collect();
        monotone &= thetas.windows(2).all(|t| law.cdf(t[1], x) <= law.cdf(t[0], x) + 1e-12);
    }

    let mut wald_gap: f64 = 0.0;
    for &(theta_hat, sigma2) in &[(0.0, 1.0), (1.3, 0.04), (-2.0, 9.0)] {
        let inputs = LawInputs { sigma2, theta_hat, direction: vec![1.0], offset: vec![0.0] };
        let law = ConditionalLaw::build(&ConstantProbability(0.3), &inputs, GridSpec::default()).unwrap();
        let ci = law.invert_ci(theta_hat, 0.1).unwrap();
        let wald = Interval::wald(theta_hat, sigma2.sqrt(), 0.1);
        wald_gap = wald_gap.max(((ci.lower - wald.lower).abs()).max((ci.upper - wald.upper).abs()) / law.spacing());
    }

    let mut tn_gap: f64 = 0.0;
    let (sigma, theta_hat) = (0.5, 0.2);
    let inputs = LawInputs { sigma2: sigma * sigma, theta_hat, direction: vec![1.0], offset: vec![0.0] };
    let spec = GridSpec::default();
    let step = 2.0 * spec.span * sigma / (spec.points - 1) as f64;
    let cut = theta_hat - spec.span * sigma + 45.5 * step;
    let law = ConditionalLaw::build(&FnProbability(|z: &[f64]| (z[0] > cut) as u8 as f64), &inputs, spec).unwrap();
    for theta in [cut - sigma, cut, theta_hat, cut + 2.0 * sigma] {
        for &x in &law.grid {
            let edge = x + step / 2.0;
            tn_gap = tn_gap.max((law.cdf(theta, edge) - tn_cdf(theta, sigma, cut, edge).unwrap()).abs());
        }
    }

    Outcome::new(&[
        (monotone, "monotone in x and theta on 100 random laws".to_string()),
        (wald_gap <= 1.5, format!("constant pi vs Wald {wald_gap:.2} spacings")),
        (tn_gap <= 2e-3, format!("indicator law vs truncated normal {tn_gap:.1e}")),
    ])
}

// ---------------------------------------------------------------- 9

/// Largest `k` with at least `k` p-values at or below `qk/K`.
fn bh_exhaustive(p: &[f64], q: f64) -> Vec<usize> {
    let k = p.len();
    for m in (1..=k).rev() {
        let t = q * m as f64 / k as f64;
        if p.iter().filter(|&&v| v <= t).count() >= m {
            return (0..k).filter(|&i| p[i] <= t).collect();
        }
    }
    Vec::new()
}

fn selector_oracles() -> Outcome {
    let mut rng = RandomSeed::new(90).rng();
    let mut kkt: f64 = 0.0;
    for _ in 0..50 {
        let (n, p) = (rng.random_range(20..80), rng.random_range(2..15));
        let x = Array2::from_shape_fn((n, p), |_| standard_normal(&mut rng));
        let y: Vec<f64> = (0..n).map(|i| 0.8 * x[[i, 0]] - 0.5 * x[[i, 1]] + standard_normal(&mut rng)).collect();
        let lambda = rng.random_range(0.01..0.5);
        let beta = lasso_cd(x.view(), &y, lambda).unwrap();
        let resid = Array1::from(y) - x.dot(&Array1::from(beta.clone()));
        let grad = x.t().dot(&resid) / n as f64;
        for j in 0..p {
            let r = if beta[j] != 0.0 { (grad[j] - lambda * beta[j].signum()).abs() } else { (grad[j].abs() - lambda).max(0.0) };
            kkt = kkt.max(r);
        }
    }

    let mut bh_mismatch = 0;
    for _ in 0..1000 {
        let k = rng.random_range(1..40);
        let p: Vec<f64> = (0..k)
            .map(|_| match rng.random_range(0..3) {
                0 => rng.random_range(0.0..0.02),
                1 => (rng.random_range(0..20) as f64) / 100.0,
                _ => rng.random::<f64>(),
            })
            .collect();
        let q = rng.random_range(0.01..0.5);
        if bh_select(&p, q).unwrap() != ModelId::RejectionSet(bh_exhaustive(&p, q)) {
            bh_mismatch += 1;
        }
    }

    let params = selective::harness::config::RepeatedParams { init: 100, step: 50, alpha0: 0.1, effect: 0.0, max_stages: 1 };
    let stops = (0..2000)
        .filter(|&i| {
            let data = simulate_repeated(&params, &RandomSeed::new(91).stream(i)).unwrap();
            matches!(repeated_test_run(&data, 0.1, 1), Ok(out) if out.model == ModelId::StoppedAt(1))
        })
        .count();
    let rate = stops as f64 / 2000.0;

    Outcome::new(&[
        (kkt <= 1e-6, format!("lasso KKT residual {kkt:.1e}")),
        (bh_mismatch == 0, format!("BH mismatches {bh_mismatch}/1000")),
        (within(rate, 0.08, 0.12), format!("stage-1 stop rate {rate:.3}")),
    ])
}

// ---------------------------------------------------------------- 10

fn bh_and_repeated_coverage() -> Outcome {
    let mut checks = Vec::new();
    for theta0 in [0.05, 0.2] {
        let mut cfg = ExperimentConfig::desk(ExperimentKind::Bh);
        cfg.bh.theta0 = theta0;
        let bb = coverage(&run_experiment(&cfg).unwrap(), Method::Bb);
        checks.push((within(bb, 0.83, 0.97), format!("BH theta0={theta0} bb {bb:.3}")));
    }
    for effect in [0.0, 0.2] {
        let mut cfg = ExperimentConfig::desk(ExperimentKind::Repeated);
        cfg.repeated.effect = effect;
        let out = run_experiment(&cfg).unwrap();
        let bb = coverage(&out, Method::Bb);
        checks.push((within(bb, 0.83, 0.97), format!("repeated effect={effect} bb {bb:.3}")));
        if effect == 0.0 {
            let naive = coverage(&out, Method::Naive);
            checks.push((naive < 0.5, format!("naive {naive:.3}")));
        }
    }
    Outcome::new(&checks)
}

// ---------------------------------------------------------------- 11

fn deterministic_output() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut checks = Vec::new();
    for kind in [ExperimentKind::Dtl, ExperimentKind::Bh, ExperimentKind::Repeated] {
        let mut cfg = ExperimentConfig::desk(kind);
        cfg.replicates = 3;
        cfg.boot = 300;
        cfg.epochs = 40;
        let files: Vec<Vec<Vec<u8>>> = (0..2)
            .map(|run| {
                let path = dir.path().join(format!("{}-{run}.json", kind.as_str()));
                let written = emit(&run_experiment(&cfg).unwrap(), OutputFormat::Json, &path).unwrap();
                written.iter().map(|p| std::fs::read(p).unwrap()).collect()
            })
            .collect();
        checks.push((files[0] == files[1], format!("{} identical", kind.as_str())));
    }
    Outcome::new(&checks)
}

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("learned marginalized law vs closed form", learned_marginal_matches_closed_form),
        ("drop-the-losers coverage", dtl_coverage),
        ("drop-the-losers length ordering", dtl_length_ordering),
        ("truncated-normal oracle", truncated_normal_suite),
        ("marginalized one-sided length bound", marginal_length_bound),
        ("pivot diagnostic", diagnostic_discrimination),
        ("learner", learner_checks),
        ("grid exponential family", exponential_family_properties),
        ("selector oracles", selector_oracles),
        ("BH and repeated-testing coverage", bh_and_repeated_coverage),
        ("determinism", deterministic_output),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!(
                "panicked: {}",
                e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            ),
        });
        failed += !outcome.pass as usize;
        println!(
            "criterion {n:>2} {}: {name}: {} [{:.0}s]",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
