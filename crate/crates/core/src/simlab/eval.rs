//! Out-of-sample metrics and regrets on a fresh simulated sample, using
//! the design's exact conditional bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DgpOracle, PotentialSample};
use crate::data::SensitivityParam;
use crate::error::{Error, Result};
use crate::policy::logistic::basis_row;
use crate::policy::quadrant::quadrant_search_scored;
use crate::policy::{logistic_ascent, tree_search, AscentOptions, LogisticPolicy, Policy, PolicyClass};

/// A fresh sample with `mu^-`, `mu^+` precomputed at one `lambda`.
#[derive(Debug, Clone)]
pub struct OracleEval {
    lambda: SensitivityParam,
    xs: Vec<Vec<f64>>,
    y0: Vec<f64>,
    y1: Vec<f64>,
    mu_lo: Vec<[f64; 2]>,
    mu_hi: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub treated_frac: f64,
    pub exp_welfare: f64,
    pub worst_welfare: f64,
    pub worst_improvement: f64,
}

/// Best-in-class value minus the policy's value, for both criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regret {
    pub crw: f64,
    pub cri: f64,
    /// The class optimum was approximated from below (logistic class), so
    /// both regrets are lower bounds.
    pub lower_bound: bool,
}

impl OracleEval {
    pub fn new(oracle: &DgpOracle, samples: &[PotentialSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyData);
        }
        let bounds: Vec<_> = samples.par_iter().map(|s| oracle.bounds_at(&s.x)).collect();
        Ok(Self {
            lambda: oracle.lambda(),
            xs: samples.iter().map(|s| s.x.clone()).collect(),
            y0: samples.iter().map(|s| s.y0).collect(),
            y1: samples.iter().map(|s| s.y1).collect(),
            mu_lo: bounds.iter().map(|b| b.mu_lo).collect(),
            mu_hi: bounds.iter().map(|b| b.mu_hi).collect(),
        })
    }

    pub fn lambda(&self) -> SensitivityParam {
        self.lambda
    }
    pub fn n(&self) -> usize {
        self.xs.len()
    }
    pub fn xs(&self) -> &[Vec<f64>] {
        &self.xs
    }
    pub fn mu_lo(&self) -> &[[f64; 2]] {
        &self.mu_lo
    }
    pub fn mu_hi(&self) -> &[[f64; 2]] {
        &self.mu_hi
    }

    /// `tau^-(x_i) = mu^-(x_i, 1) - mu^+(x_i, 0)`.
    pub fn tau_lo(&self) -> Vec<f64> {
        self.mu_lo.iter().zip(&self.mu_hi).map(|(l, h)| l[1] - h[0]).collect()
    }

    /// `mu^-(x_i, 1) - mu^-(x_i, 0)`.
    pub fn welfare_gains(&self) -> Vec<f64> {
        self.mu_lo.iter().map(|l| l[1] - l[0]).collect()
    }

    fn base_welfare(&self) -> f64 {
        self.mu_lo.iter().map(|l| l[0]).sum::<f64>() / self.n() as f64
    }

    /// Treat probabilities of a binary policy on every unit.
    pub fn treat_probabilities(&self, policy: &Policy) -> Result<Vec<f64>> {
        if policy.m != 2 {
            return Err(Error::NotBinary(policy.m));
        }
        self.xs.par_iter().map(|x| policy.treat_probability(x)).collect()
    }

    pub fn metrics(&self, probs: &[f64]) -> Result<PolicyMetrics> {
        if probs.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: probs.len() });
        }
        let n = self.n() as f64;
        let tau = self.tau_lo();
        let (mut tf, mut ew, mut ww, mut wi) = (0.0, 0.0, 0.0, 0.0);
        for (i, &p) in probs.iter().enumerate() {
            tf += p;
            ew += p * self.y1[i] + (1.0 - p) * self.y0[i];
            ww += p * self.mu_lo[i][1] + (1.0 - p) * self.mu_lo[i][0];
            wi += p * tau[i];
        }
        Ok(PolicyMetrics { treated_frac: tf / n, exp_welfare: ew / n, worst_welfare: ww / n, worst_improvement: wi / n })
    }

    /// Worst-case welfare and improvement of given treat probabilities.
    pub(crate) fn criteria(&self, probs: &[f64]) -> Result<(f64, f64)> {
        let m = self.metrics(probs)?;
        Ok((m.worst_welfare, m.worst_improvement))
    }
}

/// Expected welfare, worst-case welfare and worst-case improvement of a
/// binary policy on the evaluation sample.
pub fn evaluate_policy(policy: &Policy, eval: &OracleEval) -> Result<PolicyMetrics> {
    eval.metrics(&eval.treat_probabilities(policy)?)
}

/// Exact best-in-class worst-case welfare and improvement on the sample,
/// for the exhaustively searchable classes.
pub fn class_sup(class: &PolicyClass, eval: &OracleEval) -> Result<(f64, f64)> {
    let n = eval.n() as f64;
    match class {
        PolicyClass::Quadrant { i, j } => {
            let w = quadrant_search_scored(&eval.welfare_gains(), eval.xs(), *i, *j)?.sum / n;
            let d = quadrant_search_scored(&eval.tau_lo(), eval.xs(), *i, *j)?.sum / n;
            Ok((eval.base_welfare() + w, d))
        }
        PolicyClass::Tree { depth, features } => {
            let features: Vec<usize> = features.clone().unwrap_or_else(|| (0..eval.xs()[0].len()).collect());
            let rewards: Vec<Vec<f64>> = eval.mu_lo().iter().map(|l| l.to_vec()).collect();
            let (_, w) = tree_search(&rewards, eval.xs(), &features, *depth)?;
            let rewards: Vec<Vec<f64>> = eval.tau_lo().into_iter().map(|t| vec![0.0, t]).collect();
            let (_, d) = tree_search(&rewards, eval.xs(), &features, *depth)?;
            Ok((w / n, d / n))
        }
        PolicyClass::Logistic { .. } => {
            Err(Error::UnsupportedClass("logistic (use logistic_class_sup for a lower bound)".into()))
        }
    }
}

/// Exact regrets for the quadrant and tree classes.
pub fn estimate_regret(policy: &Policy, class: &PolicyClass, eval: &OracleEval) -> Result<Regret> {
    let (w, d) = eval.criteria(&eval.treat_probabilities(policy)?)?;
    let (sup_w, sup_d) = class_sup(class, eval)?;
    Ok(Regret { crw: (sup_w - w).max(0.0), cri: (sup_d - d).max(0.0), lower_bound: false })
}

/// Lower bounds on the best logistic-class worst-case welfare and
/// improvement: multi-restart ascent on (a prefix of) the evaluation
/// sample, with the resulting coefficients scored on the full sample.
pub fn logistic_class_sup(
    eval: &OracleEval,
    features: Option<&[usize]>,
    opts: &AscentOptions,
    fit_n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let width = 1 + features.map_or(eval.xs()[0].len(), <[usize]>::len);
    let fit_n = fit_n.clamp(1, eval.n());
    let basis = eval.xs()[..fit_n].iter().map(|x| basis_row(x, features, width)).collect::<Result<Vec<_>>>()?;
    let mut out = [0.0; 2];
    for (k, gains) in [eval.welfare_gains(), eval.tau_lo()].into_iter().enumerate() {
        let report = logistic_ascent(&gains[..fit_n], &basis, opts, seed.wrapping_add(k as u64))?;
        let policy = Policy { m: 2, rule: crate::policy::Rule::Logistic(LogisticPolicy::identity(report.beta, features.map(<[usize]>::to_vec))) };
        let (w, d) = eval.criteria(&eval.treat_probabilities(&policy)?)?;
        out[k] = if k == 0 { w } else { d };
    }
    Ok((out[0], out[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{quadrant_search, Rule};
    use crate::simlab::{generate, DgpConfig};

    fn eval(n: usize) -> OracleEval {
        let c = DgpConfig { n, ..Default::default() };
        let o = DgpOracle::new(&c, SensitivityParam::from_log(1.0).unwrap()).unwrap();
        OracleEval::new(&o, &generate(&c, 11).unwrap()).unwrap()
    }

    #[test]
    fn constant_policies() {
        let e = eval(500);
        let never = evaluate_policy(&Policy::constant(0, 2), &e).unwrap();
        assert_eq!(never.worst_improvement, 0.0);
        assert_eq!(never.treated_frac, 0.0);
        let always = evaluate_policy(&Policy::constant(1, 2), &e).unwrap();
        let want = e.mu_lo().iter().map(|l| l[1]).sum::<f64>() / 500.0;
        assert!((always.worst_welfare - want).abs() < 1e-12);
    }

    #[test]
    fn pointwise_first_best_dominates() {
        let e = eval(400);
        let fb: Vec<f64> = e.welfare_gains().iter().map(|g| f64::from(u8::from(*g > 0.0))).collect();
        let best = e.metrics(&fb).unwrap().worst_welfare;
        for p in [Policy::constant(0, 2), Policy::constant(1, 2)] {
            assert!(evaluate_policy(&p, &e).unwrap().worst_welfare <= best);
        }
        let q = quadrant_search(&e.welfare_gains(), e.xs(), 0, 1).unwrap();
        assert!(evaluate_policy(&Policy { m: 2, rule: Rule::Quadrant(q) }, &e).unwrap().worst_welfare <= best + 1e-12);
    }

    #[test]
    fn in_class_maximizer_has_zero_regret() {
        let e = eval(600);
        let class = PolicyClass::Quadrant { i: 0, j: 1 };
        let q = quadrant_search(&e.welfare_gains(), e.xs(), 0, 1).unwrap();
        let r = estimate_regret(&Policy { m: 2, rule: Rule::Quadrant(q) }, &class, &e).unwrap();
        assert!(r.crw.abs() < 1e-12);
        assert!(!r.lower_bound);
        let tree = PolicyClass::Tree { depth: 1, features: None };
        let rewards: Vec<Vec<f64>> = e.mu_lo().iter().map(|l| l.to_vec()).collect();
        let (t, _) = tree_search(&rewards, e.xs(), &[0, 1], 1).unwrap();
        let r = estimate_regret(&Policy { m: 2, rule: Rule::Tree(t) }, &tree, &e).unwrap();
        assert!(r.crw.abs() < 1e-12);
    }

    #[test]
    fn never_treat_regret_is_mean_tau_when_all_positive() {
        // at unit lambda with a large treatment effect every tau^- is positive
        let c = DgpConfig { n: 300, beta_a: 20.0, ..Default::default() };
        let o = DgpOracle::new(&c, SensitivityParam::one()).unwrap();
        let e = OracleEval::new(&o, &generate(&c, 2).unwrap()).unwrap();
        let tau = e.tau_lo();
        assert!(tau.iter().all(|t| *t > 0.0));
        let r = estimate_regret(&Policy::constant(0, 2), &PolicyClass::Quadrant { i: 0, j: 1 }, &e).unwrap();
        let mean = tau.iter().sum::<f64>() / 300.0;
        assert!((r.cri - mean).abs() < 1e-12);
    }

    #[test]
    fn logistic_regret_is_refused_but_bounded() {
        let e = eval(300);
        let class = PolicyClass::logistic();
        assert!(matches!(estimate_regret(&Policy::constant(1, 2), &class, &e), Err(Error::UnsupportedClass(_))));
        let opts = AscentOptions { restarts: 2, max_iter: 100, ..Default::default() };
        let (w, _) = logistic_class_sup(&e, None, &opts, 300, 1).unwrap();
        let always = evaluate_policy(&Policy::constant(1, 2), &e).unwrap().worst_welfare;
        let never = evaluate_policy(&Policy::constant(0, 2), &e).unwrap().worst_welfare;
        assert!(w >= always.min(never) - 1e-9);
    }
}
