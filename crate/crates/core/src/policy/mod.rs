//! Treatment policies: serializable rules mapping covariates to arm
//! probabilities, plus exact and heuristic optimizers over each class.
//!
//! JSON form is `{"kind": ..., "m": ..., "params": {...}}`. Infinite
//! thresholds are written as the strings `"inf"` / `"-inf"`.

pub mod learn;
pub mod logistic;
pub mod quadrant;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use learn::{learn_from_scores, learn_mmi, learn_mmw, Criterion, LearnOutcome, PolicyClass};
pub use logistic::{logistic_ascent, AscentOptions, AscentReport, LogisticPolicy};
pub use quadrant::{quadrant_search, QuadrantPolicy};
pub use tree::{tree_search, TreeNode, TreePolicy};

/// Serde helper for thresholds that may be infinite.
pub(crate) mod maybe_inf {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("invalid threshold `{other}`"))),
            },
        }
    }
}

/// Same arm (or arm distribution) for everyone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ConstantPolicy {
    Arm { arm: usize },
    Probs { probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum Rule {
    Constant(ConstantPolicy),
    Quadrant(QuadrantPolicy),
    Tree(TreePolicy),
    Logistic(LogisticPolicy),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub m: usize,
    #[serde(flatten)]
    pub rule: Rule,
}

fn one_hot(arm: usize, m: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[arm] = 1.0;
    v
}

impl Policy {
    pub fn constant(arm: usize, m: usize) -> Self {
        Self { m, rule: Rule::Constant(ConstantPolicy::Arm { arm }) }
    }

    pub fn kind(&self) -> &'static str {
        match self.rule {
            Rule::Constant(_) => "constant",
            Rule::Quadrant(_) => "quadrant",
            Rule::Tree(_) => "tree",
            Rule::Logistic(_) => "logistic",
        }
    }

    /// Structural checks applied after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::BadConfig(format!("policy arm count must be >= 2, got {}", self.m)));
        }
        let binary_only = |class: &str| {
            if self.m != 2 {
                Err(Error::UnsupportedClassForArms { class: class.into(), m: self.m })
            } else {
                Ok(())
            }
        };
        match &self.rule {
            Rule::Constant(ConstantPolicy::Arm { arm }) => {
                if *arm >= self.m {
                    return Err(Error::BadConfig(format!("constant arm {arm} outside 0..{}", self.m)));
                }
            }
            Rule::Constant(ConstantPolicy::Probs { probs }) => {
                if probs.len() != self.m {
                    return Err(Error::DimensionMismatch { expected: self.m, got: probs.len() });
                }
                let s: f64 = probs.iter().sum();
                if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (s - 1.0).abs() > 1e-12 {
                    return Err(Error::BadConfig("constant probabilities must form a simplex vector".into()));
                }
            }
            Rule::Quadrant(q) => {
                binary_only("quadrant")?;
                q.validate()?;
            }
            Rule::Tree(t) => t.validate(self.m)?,
            Rule::Logistic(l) => {
                binary_only("logistic")?;
                l.validate()?;
            }
        }
        Ok(())
    }

    /// Arm-probability vector at `x`.
    pub fn assign_probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.rule {
            Rule::Constant(ConstantPolicy::Arm { arm }) => Ok(one_hot(*arm, self.m)),
            Rule::Constant(ConstantPolicy::Probs { probs }) => Ok(probs.clone()),
            Rule::Quadrant(q) => Ok(one_hot(usize::from(q.treats(x)?), 2)),
            Rule::Tree(t) => Ok(one_hot(t.arm(x)?, self.m)),
            Rule::Logistic(l) => {
                let p = l.treat_probability(x)?;
                Ok(vec![1.0 - p, p])
            }
        }
    }

    /// `pi(1|x)` for a binary policy.
    pub fn treat_probability(&self, x: &[f64]) -> Result<f64> {
        if self.m != 2 {
            return Err(Error::NotBinary(self.m));
        }
        Ok(self.assign_probabilities(x)?[1])
    }

    /// Probabilities at many points.
    pub fn assign_all<'a, I>(&self, xs: I) -> Result<Vec<Vec<f64>>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        xs.into_iter().map(|x| self.assign_probabilities(x)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Policy = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }
}

fn check_index(x: &[f64], idx: usize) -> Result<()> {
    if idx >= x.len() {
        Err(Error::DimensionMismatch { expected: idx + 1, got: x.len() })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::folds::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn quadrant_pp() -> Policy {
        Policy {
            m: 2,
            rule: Rule::Quadrant(QuadrantPolicy { i: 0, j: 1, s1: 1, s2: 1, t1: 0.0, t2: 0.0 }),
        }
    }

    #[test]
    fn spec_examples() {
        let c = Policy::constant(1, 2);
        assert_eq!(c.assign_probabilities(&[3.0, -2.0]).unwrap(), vec![0.0, 1.0]);
        let q = quadrant_pp();
        assert_eq!(q.assign_probabilities(&[1.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(q.assign_probabilities(&[1.0, -1.0]).unwrap(), vec![1.0, 0.0]);
        let l = Policy { m: 2, rule: Rule::Logistic(LogisticPolicy::identity(vec![0.0, 0.0, 0.0], None)) };
        assert_eq!(l.assign_probabilities(&[5.0, -1.0]).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(l.assign_probabilities(&[5.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(q.assign_probabilities(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn json_shapes() {
        let text = quadrant_pp().to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["kind"], "quadrant");
        assert_eq!(v["m"], 2);
        assert_eq!(v["params"]["s1"], 1);
        let inf = Policy {
            m: 2,
            rule: Rule::Quadrant(QuadrantPolicy { i: 0, j: 1, s1: -1, s2: -1, t1: f64::NEG_INFINITY, t2: f64::INFINITY }),
        };
        let back = Policy::from_json(&inf.to_json().unwrap()).unwrap();
        assert_eq!(back, inf);
        let probs = Policy::from_json(r#"{"kind":"constant","m":3,"params":{"probs":[0.25,0.25,0.5]}}"#).unwrap();
        assert_eq!(probs.assign_probabilities(&[]).unwrap(), vec![0.25, 0.25, 0.5]);
        let arm = Policy::from_json(r#"{"kind":"constant","m":2,"params":{"arm":0}}"#).unwrap();
        assert_eq!(arm, Policy::constant(0, 2));
        let tree = Policy::from_json(
            r#"{"kind":"tree","m":3,"params":{"nodes":[{"feat":0,"thr":0.5,"left":1,"right":2},{"leaf":2},{"leaf":0}]}}"#,
        )
        .unwrap();
        assert_eq!(tree.assign_probabilities(&[0.1]).unwrap(), vec![0.0, 0.0, 1.0]);
        assert!(Policy::from_json(r#"{"kind":"constant","m":2,"params":{"arm":5}}"#).is_err());
        assert!(Policy::from_json(r#"{"kind":"quadrant","m":3,"params":{"i":0,"j":1,"s1":1,"s2":1,"t1":0,"t2":0}}"#).is_err());
    }

    fn arb_policy() -> impl Strategy<Value = Policy> {
        prop_oneof![
            (0usize..3).prop_map(|arm| Policy::constant(arm, 3)),
            (prop::sample::select(vec![-1i8, 1]), prop::sample::select(vec![-1i8, 1]), -2.0f64..2.0, -2.0f64..2.0)
                .prop_map(|(s1, s2, t1, t2)| Policy { m: 2, rule: Rule::Quadrant(QuadrantPolicy { i: 1, j: 2, s1, s2, t1, t2 }) }),
            prop::collection::vec(-3.0f64..3.0, 4)
                .prop_map(|b| Policy { m: 2, rule: Rule::Logistic(LogisticPolicy::identity(b, None)) }),
            (0usize..3, -1.0f64..1.0, 0usize..3, 0usize..3).prop_map(|(f, t, l, r)| Policy {
                m: 3,
                rule: Rule::Tree(TreePolicy {
                    nodes: vec![
                        TreeNode::Split { feat: f, thr: t, left: 1, right: 2 },
                        TreeNode::Leaf { leaf: l },
                        TreeNode::Leaf { leaf: r },
                    ],
                }),
            }),
        ]
    }

    proptest! {
        #[test]
        fn simplex_and_round_trip(p in arb_policy(), seed: u64) {
            let back = Policy::from_json(&p.to_json().unwrap()).unwrap();
            let mut rng = rng_from_seed(seed);
            for _ in 0..1000 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
                let a = p.assign_probabilities(&x).unwrap();
                let b = back.assign_probabilities(&x).unwrap();
                prop_assert_eq!(a.len(), p.m);
                prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
                for (u, v) in a.iter().zip(&b) {
                    prop_assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }
}
