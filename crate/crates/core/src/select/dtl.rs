//! Drop-the-losers: pick the group with the largest first-stage mean.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

use super::{ModelId, SelectionAux, Selector, SelectorOutput};

/// Index of the largest mean; ties go to the lowest index.
pub fn dtl_select(means: &[f64]) -> Result<ModelId> {
    if means.is_empty() {
        return Err(Error::InvalidData("no group means".into()));
    }
    if means.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite("group means"));
    }
    let mut best = 0;
    for (k, &m) in means.iter().enumerate().skip(1) {
        if m > means[best] {
            best = k;
        }
    }
    Ok(ModelId::Winner(best))
}

/// Basis is the vector of first-stage means. With `marginalize`, the
/// winner's coordinate is replaced by the pooled two-stage mean θ̂ and the
/// difference `X̄_{k*} − θ̂` becomes `V̂`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DtlSelector {
    pub marginalize: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl Selector for DtlSelector {
    fn run(&self, data: &Dataset, target: Option<&ModelId>, _omega: &mut Rng) -> Result<SelectorOutput> {
        let Dataset::Grouped { groups, followup } = data else {
            return Err(Error::InvalidData("drop-the-losers needs grouped data".into()));
        };
        let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
        let model = dtl_select(&means)?;
        let k = match target.unwrap_or(&model) {
            ModelId::Winner(k) if *k < means.len() => *k,
            other => return Err(Error::Mismatch(format!("{other:?} is not a winner index for {} groups", means.len()))),
        };
        let (n1, xbar) = (groups[k].len() as f64, means[k]);
        let theta = match followup {
            Some(f) if f.group != k => {
                return Err(Error::Mismatch(format!("second-stage data belongs to group {}, not {k}", f.group)))
            }
            Some(f) if !f.values.is_empty() => {
                let n2 = f.values.len() as f64;
                (n1 * xbar + f.values.iter().sum::<f64>()) / (n1 + n2)
            }
            _ => xbar,
        };
        let runner_up = means
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, &m)| m)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut basis = means.clone();
        let mut v_hat = vec![0.0; means.len()];
        if self.marginalize {
            basis[k] = theta;
            v_hat[k] = xbar - theta;
        }
        Ok(SelectorOutput {
            model,
            basis,
            v_hat,
            theta_hat: vec![theta],
            aux: SelectionAux::Dtl { runner_up, winner_mean: xbar },
        })
    }
}

/// Convenience wrapper: run the drop-the-losers selector on first-stage
/// groups plus the winner's second-stage observations.
pub fn dtl_outputs(groups: Vec<Vec<f64>>, second_stage: Vec<f64>, marginalize: bool) -> Result<SelectorOutput> {
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let ModelId::Winner(k) = dtl_select(&means)? else { unreachable!() };
    let data = Dataset::grouped(groups)?.with_followup(k, second_stage)?;
    let mut rng = crate::rng::RandomSeed::new(0).rng();
    DtlSelector { marginalize }.run(&data, None, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSeed;
    use proptest::prelude::*;
    use crate::rng::standard_normal;

    #[test]
    fn strict_max_and_ties() {
        assert_eq!(dtl_select(&[0.5, 0.2, -0.1]).unwrap(), ModelId::Winner(0));
        assert_eq!(dtl_select(&[1.0, 1.0, 0.0]).unwrap(), ModelId::Winner(0));
        assert_eq!(dtl_select(&[0.0, 1.0, 1.0]).unwrap(), ModelId::Winner(1));
        assert!(dtl_select(&[]).is_err());
    }

    #[test]
    fn matches_linear_scan() {
        let mut rng = RandomSeed::new(4).rng();
        for _ in 0..50 {
            let v: Vec<f64> = (0..50).map(|_| standard_normal(&mut rng)).collect();
            let mut best = (0, f64::NEG_INFINITY);
            for (i, &x) in v.iter().enumerate() {
                if x > best.1 {
                    best = (i, x);
                }
            }
            assert_eq!(dtl_select(&v).unwrap(), ModelId::Winner(best.0));
        }
    }

    proptest! {
        #[test]
        fn argmax_invariant_to_shift_and_scale(v in prop::collection::vec(-100.0f64..100.0, 2..30), c in -50.0f64..50.0, s in 0.01f64..100.0) {
            let w: Vec<f64> = v.iter().map(|x| s * x + c).collect();
            // exact ties may split after rounding; skip those
            let mut sorted = v.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            prop_assume!(sorted[0] - sorted[1] > 1e-9 * sorted[0].abs().max(1.0));
            prop_assert_eq!(dtl_select(&v).unwrap(), dtl_select(&w).unwrap());
        }
    }

    #[test]
    fn degenerate_second_stage() {
        let out = dtl_outputs(vec![vec![1.0, 2.0], vec![0.0, 0.5]], vec![], false).unwrap();
        assert_eq!(out.theta_hat, vec![1.5]);
        assert_eq!(out.basis, vec![1.5, 0.25]);
        assert_eq!(out.v_hat, vec![0.0, 0.0]);
    }

    #[test]
    fn marginalized_identity_and_pooled_mean() {
        let mut rng = RandomSeed::new(8).rng();
        let groups: Vec<Vec<f64>> =
            (0..5).map(|_| (0..100).map(|_| standard_normal(&mut rng)).collect()).collect();
        let second: Vec<f64> = (0..25).map(|_| standard_normal(&mut rng)).collect();
        let out = dtl_outputs(groups.clone(), second.clone(), true).unwrap();
        let ModelId::Winner(k) = out.model else { panic!() };
        let xbar = groups[k].iter().sum::<f64>() / 100.0;
        assert_eq!(out.basis[k] + out.v_hat[k], xbar);
        let pooled: f64 = groups[k].iter().chain(&second).sum::<f64>() / 125.0;
        assert!((out.theta_hat[0] - pooled).abs() < 1e-14);
        assert_eq!(out.basis[k], out.theta_hat[0]);
        let SelectionAux::Dtl { runner_up, .. } = out.aux else { panic!() };
        let a = (0..5).filter(|&j| j != k).map(|j| groups[j].iter().sum::<f64>() / 100.0).fold(f64::MIN, f64::max);
        assert_eq!(runner_up, a);
    }

    #[test]
    fn followup_for_wrong_group_is_an_error() {
        let data = Dataset::grouped(vec![vec![1.0], vec![0.0]]).unwrap().with_followup(1, vec![1.0]).unwrap();
        let mut rng = RandomSeed::new(0).rng();
        assert!(matches!(DtlSelector::default().run(&data, None, &mut rng), Err(Error::Mismatch(_))));
    }
}
