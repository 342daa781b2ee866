//! End-to-end learners: cross-fit nuisances, score every unit, optimize
//! the estimated criterion over a policy class.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::logistic::{basis_row, logistic_ascent, AscentOptions, LogisticPolicy};
use super::quadrant::quadrant_search;
use super::tree::tree_search;
use super::{Policy, Rule};
use crate::data::{Dataset, SensitivityParam};
use crate::error::{Error, Result};
use crate::nuisance::{fit_crossfit_with, NuisanceOracle, NuisanceSpec};
use crate::scores::{build_score_table, estimate_delta, estimate_w, Estimate, ScoreTable};

/// Worst-case welfare (MMW) or worst-case improvement over never-treat (MMI).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Mmw,
    Mmi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicyClass {
    Quadrant {
        i: usize,
        j: usize,
    },
    Tree {
        depth: usize,
        #[serde(default)]
        features: Option<Vec<usize>>,
    },
    Logistic {
        #[serde(default)]
        features: Option<Vec<usize>>,
        #[serde(default)]
        ascent: AscentOptions,
    },
}

impl PolicyClass {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyClass::Quadrant { .. } => "quadrant",
            PolicyClass::Tree { .. } => "tree",
            PolicyClass::Logistic { .. } => "logistic",
        }
    }

    /// Default logistic class over all covariates.
    pub fn logistic() -> Self {
        PolicyClass::Logistic { features: None, ascent: AscentOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnOutcome {
    pub policy: Policy,
    /// In-sample estimate of the optimized criterion.
    pub value: Estimate,
    pub criterion: Criterion,
    /// Share of units assigned away from arm 0 (mean `pi(1|x)` when binary).
    pub treated_fraction: f64,
    /// Whether the logistic optimizer met its gradient tolerance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

/// Optimizes the criterion implied by `table` over `class`.
pub fn learn_from_scores(
    table: &ScoreTable,
    xs: &[Vec<f64>],
    class: &PolicyClass,
    criterion: Criterion,
    seed: u64,
) -> Result<LearnOutcome> {
    let m = table.m();
    if xs.len() != table.n() {
        return Err(Error::DimensionMismatch { expected: table.n(), got: xs.len() });
    }
    if criterion == Criterion::Mmi && m != 2 {
        return Err(Error::NotBinary(m));
    }
    let binary_gains = || match criterion {
        Criterion::Mmw => table.welfare_gains(),
        Criterion::Mmi => table.improvement_gains(),
    };
    let mut converged = None;
    let policy = match class {
        PolicyClass::Quadrant { i, j } => {
            if m != 2 {
                return Err(Error::UnsupportedClassForArms { class: "quadrant".into(), m });
            }
            Policy { m, rule: Rule::Quadrant(quadrant_search(&binary_gains()?, xs, *i, *j)?) }
        }
        PolicyClass::Tree { depth, features } => {
            let d = xs.first().map_or(0, Vec::len);
            let features: Vec<usize> = features.clone().unwrap_or_else(|| (0..d).collect());
            let rewards: Vec<Vec<f64>> = match criterion {
                Criterion::Mmw => table.phi_minus().to_vec(),
                Criterion::Mmi => binary_gains()?.into_iter().map(|g| vec![0.0, g]).collect(),
            };
            let (tree, _) = tree_search(&rewards, xs, &features, *depth)?;
            Policy { m, rule: Rule::Tree(tree) }
        }
        PolicyClass::Logistic { features, ascent } => {
            if m != 2 {
                return Err(Error::UnsupportedClassForArms { class: "logistic".into(), m });
            }
            let width = 1 + features.as_ref().map_or_else(|| xs.first().map_or(0, Vec::len), Vec::len);
            let basis = xs.iter().map(|x| basis_row(x, features.as_deref(), width)).collect::<Result<Vec<_>>>()?;
            let report = logistic_ascent(&binary_gains()?, &basis, ascent, seed)?;
            converged = Some(report.converged);
            Policy { m, rule: Rule::Logistic(LogisticPolicy::identity(report.beta, features.clone())) }
        }
    };
    let probs = xs.iter().map(|x| policy.assign_probabilities(x)).collect::<Result<Vec<_>>>()?;
    let treated_fraction = probs.iter().map(|p| 1.0 - p[0]).sum::<f64>() / probs.len() as f64;
    let value = match criterion {
        Criterion::Mmw => estimate_w(table, &probs)?,
        Criterion::Mmi => estimate_delta(table, &probs.iter().map(|p| p[1]).collect::<Vec<_>>())?,
    };
    Ok(LearnOutcome { policy, value, criterion, treated_fraction, converged })
}

/// Full pipeline for either criterion. `oracle` is required when the
/// learner is `oracle`.
pub fn learn(
    dataset: &Dataset,
    spec: &NuisanceSpec,
    class: &PolicyClass,
    criterion: Criterion,
    seed: u64,
    oracle: Option<Arc<dyn NuisanceOracle>>,
) -> Result<(LearnOutcome, ScoreTable)> {
    check_class(class, dataset.m())?;
    let spec = NuisanceSpec { upper: criterion == Criterion::Mmi || spec.upper, ..spec.clone() };
    let model = fit_crossfit_with(dataset, &spec, seed, oracle)?;
    let table = build_score_table(dataset, &model, criterion == Criterion::Mmi)?;
    let xs: Vec<Vec<f64>> = dataset.rows().iter().map(|r| r.x.clone()).collect();
    let outcome = learn_from_scores(&table, &xs, class, criterion, seed)?;
    Ok((outcome, table))
}

pub(crate) fn check_class(class: &PolicyClass, m: usize) -> Result<()> {
    match class {
        PolicyClass::Quadrant { .. } | PolicyClass::Logistic { .. } if m != 2 => {
            Err(Error::UnsupportedClassForArms { class: class.name().into(), m })
        }
        _ => Ok(()),
    }
}

/// Max-min welfare policy at sensitivity `lambda`.
pub fn learn_mmw(
    dataset: &Dataset,
    spec: &NuisanceSpec,
    lambda: SensitivityParam,
    class: &PolicyClass,
    seed: u64,
) -> Result<(Policy, Estimate)> {
    let spec = NuisanceSpec { lambda, upper: false, ..spec.clone() };
    let (o, _) = learn(dataset, &spec, class, Criterion::Mmw, seed, None)?;
    Ok((o.policy, o.value))
}

/// Max-min improvement policy at sensitivity `lambda`.
pub fn learn_mmi(
    dataset: &Dataset,
    spec: &NuisanceSpec,
    lambda: SensitivityParam,
    class: &PolicyClass,
    seed: u64,
) -> Result<(Policy, Estimate)> {
    let spec = NuisanceSpec { lambda, ..spec.clone() };
    let (o, _) = learn(dataset, &spec, class, Criterion::Mmi, seed, None)?;
    Ok((o.policy, o.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{validate_dataset, Observation};
    use crate::folds::rng_from_seed;
    use crate::nuisance::LearnerKind;
    use crate::scores::ScoreSource;
    use rand::Rng;

    fn table(lo: Vec<Vec<f64>>, hi: Option<Vec<Vec<f64>>>) -> ScoreTable {
        ScoreTable::new(lo, hi, SensitivityParam::one(), ScoreSource::Oracle).unwrap()
    }

    fn grid(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![(i % 7) as f64 - 3.0, (i % 5) as f64 - 2.0]).collect()
    }

    #[test]
    fn constant_scores_favoring_treatment() {
        let n = 35;
        let t = table(vec![vec![0.0, 1.0]; n], None);
        for class in [
            PolicyClass::Quadrant { i: 0, j: 1 },
            PolicyClass::Tree { depth: 2, features: None },
            PolicyClass::logistic(),
        ] {
            let o = learn_from_scores(&t, &grid(n), &class, Criterion::Mmw, 1).unwrap();
            assert!(o.treated_fraction > 0.99, "{}", class.name());
            assert!((o.value.value - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn negative_improvement_treats_nobody() {
        let n = 30;
        let t = table(vec![vec![0.0, -1.0]; n], Some(vec![vec![0.5, 0.0]; n]));
        for class in [PolicyClass::Quadrant { i: 0, j: 1 }, PolicyClass::Tree { depth: 2, features: None }] {
            let o = learn_from_scores(&t, &grid(n), &class, Criterion::Mmi, 1).unwrap();
            assert_eq!(o.treated_fraction, 0.0);
            assert_eq!(o.value.value, 0.0);
        }
    }

    #[test]
    fn planted_half_space() {
        let mut rng = rng_from_seed(3);
        let xs: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let lo: Vec<Vec<f64>> = xs.iter().map(|x| vec![0.0, if x[0] + x[1] > 0.2 { 1.0 } else { -1.0 }]).collect();
        let t = table(lo, Some(vec![vec![0.0, 0.0]; 300]));
        let o = learn_from_scores(&t, &xs, &PolicyClass::logistic(), Criterion::Mmi, 5).unwrap();
        let agree = xs
            .iter()
            .filter(|x| (o.policy.treat_probability(x).unwrap() > 0.5) == (x[0] + x[1] > 0.2))
            .count();
        assert!(agree as f64 / 300.0 >= 0.95);
    }

    #[test]
    fn class_arm_checks() {
        let t = table(vec![vec![0.0, 1.0, 2.0]; 4], None);
        assert!(matches!(
            learn_from_scores(&t, &grid(4), &PolicyClass::Quadrant { i: 0, j: 1 }, Criterion::Mmw, 0),
            Err(Error::UnsupportedClassForArms { .. })
        ));
        let o = learn_from_scores(&t, &grid(4), &PolicyClass::Tree { depth: 1, features: None }, Criterion::Mmw, 0).unwrap();
        assert_eq!(o.policy.assign_probabilities(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn pipeline_is_deterministic() {
        let mut rng = rng_from_seed(8);
        let rows: Vec<Observation> = (0..120)
            .map(|_| {
                let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let a = usize::from(rng.random_bool(0.5));
                let y = x[0] * a as f64 + rng.random_range(-1.0..1.0);
                Observation { x, a, y }
            })
            .collect();
        let ds = validate_dataset(rows, 2).unwrap();
        let spec = NuisanceSpec { learner: LearnerKind::Knn, k: 3, ..Default::default() };
        let lam = SensitivityParam::new(1.5).unwrap();
        let class = PolicyClass::Quadrant { i: 0, j: 1 };
        let a = learn_mmw(&ds, &spec, lam, &class, 4).unwrap();
        let b = learn_mmw(&ds, &spec, lam, &class, 4).unwrap();
        assert_eq!(a.0.to_json().unwrap(), b.0.to_json().unwrap());
        learn_mmi(&ds, &spec, lam, &class, 4).unwrap();
    }
}
