//! Logistic policies `pi(x) = sigmoid(T(x)' beta)` with the identity basis
//! `T(x) = (1, x_f1, ..., x_fk)`, and a multi-restart gradient ascent for
//! `(1/n) sum_i sigmoid(T_i' beta) g_i`.
//!
//! The objective is not concave, so the optimizer runs from the origin
//! and from `restarts` uniform(-1, 1) draws, each with Armijo backtracking.
//! Columns are standardized internally; returned coefficients are on the
//! raw scale.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::check_index;
use crate::error::{Error, Result};
use crate::folds::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticPolicy {
    pub beta: Vec<f64>,
    pub basis: String,
    /// Covariates entering the basis; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<usize>>,
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticPolicy {
    pub fn identity(beta: Vec<f64>, features: Option<Vec<usize>>) -> Self {
        Self { beta, basis: "identity".into(), features }
    }

    pub fn validate(&self) -> Result<()> {
        if self.basis != "identity" {
            return Err(Error::BadConfig(format!("unknown logistic basis `{}`", self.basis)));
        }
        if self.beta.is_empty() || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::BadConfig("logistic coefficients must be finite and nonempty".into()));
        }
        if let Some(f) = &self.features {
            if f.len() + 1 != self.beta.len() {
                return Err(Error::DimensionMismatch { expected: f.len() + 1, got: self.beta.len() });
            }
        }
        Ok(())
    }

    /// `T(x)`.
    pub fn basis_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        basis_row(x, self.features.as_deref(), self.beta.len())
    }

    pub fn treat_probability(&self, x: &[f64]) -> Result<f64> {
        let t = self.basis_row(x)?;
        Ok(sigmoid(t.iter().zip(&self.beta).map(|(a, b)| a * b).sum()))
    }
}

/// Identity basis with intercept; `width` is the expected row length.
pub fn basis_row(x: &[f64], features: Option<&[usize]>, width: usize) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(width);
    row.push(1.0);
    match features {
        Some(f) => {
            for &j in f {
                check_index(x, j)?;
                row.push(x[j]);
            }
        }
        None => row.extend_from_slice(x),
    }
    if row.len() != width {
        return Err(Error::DimensionMismatch { expected: width - 1, got: row.len() - 1 });
    }
    Ok(row)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AscentOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self { restarts: 20, max_iter: 500, grad_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentReport {
    /// Raw-scale coefficients of the best final iterate.
    pub beta: Vec<f64>,
    pub objective: f64,
    /// Objective at each starting point (origin first).
    pub initial_objectives: Vec<f64>,
    /// Objective at each final iterate (origin first).
    pub restart_objectives: Vec<f64>,
    /// Whether the winning run met the gradient tolerance.
    pub converged: bool,
}

struct Problem {
    z: Vec<Vec<f64>>,
    g: Vec<f64>,
}

impl Problem {
    fn value(&self, b: &[f64]) -> f64 {
        let n = self.g.len() as f64;
        self.z.iter().zip(&self.g).map(|(z, g)| sigmoid(dot(z, b)) * g).sum::<f64>() / n
    }

    fn value_grad(&self, b: &[f64]) -> (f64, Vec<f64>) {
        let n = self.g.len() as f64;
        let mut grad = vec![0.0; b.len()];
        let mut v = 0.0;
        for (z, g) in self.z.iter().zip(&self.g) {
            let s = sigmoid(dot(z, b));
            v += s * g;
            let w = s * (1.0 - s) * g;
            grad.iter_mut().zip(z).for_each(|(gr, zj)| *gr += w * zj);
        }
        grad.iter_mut().for_each(|gr| *gr /= n);
        (v / n, grad)
    }

    fn ascend(&self, mut b: Vec<f64>, opts: &AscentOptions) -> (Vec<f64>, f64, bool) {
        let (mut v, mut grad) = self.value_grad(&b);
        let mut step = 1.0;
        for _ in 0..opts.max_iter {
            let gn2: f64 = grad.iter().map(|x| x * x).sum();
            if gn2.sqrt() < opts.grad_tol {
                return (b, v, true);
            }
            step *= 2.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = b.iter().zip(&grad).map(|(x, d)| x + step * d).collect();
                let cv = self.value(&cand);
                if cv >= v + 1e-4 * step * gn2 {
                    b = cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return (b, v, false);
            }
            let (nv, ng) = self.value_grad(&b);
            v = nv;
            grad = ng;
        }
        let gn = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        (b, v, gn < opts.grad_tol)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes `(1/n) sum_i sigmoid(T_i' beta) gains_i` over `beta`. `basis`
/// rows are `T(x_i)`; a constant-one column, if present, absorbs the
/// centering of the other columns.
pub fn logistic_ascent(gains: &[f64], basis: &[Vec<f64>], opts: &AscentOptions, seed: u64) -> Result<AscentReport> {
    if gains.len() != basis.len() {
        return Err(Error::DimensionMismatch { expected: basis.len(), got: gains.len() });
    }
    if basis.is_empty() {
        return Err(Error::EmptyData);
    }
    let p = basis[0].len();
    let n = basis.len() as f64;
    let intercept = (0..p).find(|&j| basis.iter().all(|r| r[j] == 1.0));
    let mut center = vec![0.0; p];
    let mut scale = vec![1.0; p];
    for j in 0..p {
        if Some(j) == intercept {
            continue;
        }
        let mean = basis.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (basis.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        if sd > 0.0 {
            scale[j] = sd;
            if intercept.is_some() {
                center[j] = mean;
            }
        }
    }
    let z = basis.iter().map(|r| (0..p).map(|j| (r[j] - center[j]) / scale[j]).collect()).collect();
    let problem = Problem { z, g: gains.to_vec() };

    let mut rng = rng_from_seed(seed);
    let mut starts = vec![vec![0.0; p]];
    for _ in 0..opts.restarts {
        starts.push((0..p).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    let initial_objectives: Vec<f64> = starts.iter().map(|s| problem.value(s)).collect();
    let runs: Vec<(Vec<f64>, f64, bool)> = starts.into_par_iter().map(|s| problem.ascend(s, opts)).collect();
    let mut best = 0;
    for (k, r) in runs.iter().enumerate() {
        if r.1 > runs[best].1 {
            best = k;
        }
    }
    let gamma = &runs[best].0;
    let mut beta: Vec<f64> = (0..p).map(|j| gamma[j] / scale[j]).collect();
    if let Some(ic) = intercept {
        beta[ic] -= (0..p).map(|j| gamma[j] * center[j] / scale[j]).sum::<f64>();
    }
    Ok(AscentReport {
        beta,
        objective: runs[best].1,
        initial_objectives,
        restart_objectives: runs.iter().map(|r| r.1).collect(),
        converged: runs[best].2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![1.0, i as f64 / n as f64 * 4.0 - 2.0, ((i * 7) % 11) as f64]).collect()
    }

    #[test]
    fn zero_gains() {
        let r = logistic_ascent(&[0.0; 30], &design(30), &AscentOptions::default(), 1).unwrap();
        assert!(r.beta.iter().all(|b| *b == 0.0));
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn all_positive_gains_approach_sup() {
        let x = design(50);
        let g: Vec<f64> = (0..50).map(|i| 0.5 + (i % 3) as f64).collect();
        let sup = g.iter().sum::<f64>() / 50.0;
        let r = logistic_ascent(&g, &x, &AscentOptions::default(), 3).unwrap();
        assert!(r.objective >= 0.99 * sup, "{} vs {sup}", r.objective);
    }

    #[test]
    fn never_worse_than_starts() {
        let x = design(40);
        let g: Vec<f64> = (0..40).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let r = logistic_ascent(&g, &x, &AscentOptions { restarts: 8, ..Default::default() }, 11).unwrap();
        for v in r.initial_objectives.iter().chain(&r.restart_objectives) {
            assert!(r.objective >= v - 1e-15);
        }
        // raw-scale coefficients reproduce the objective
        let pol = LogisticPolicy::identity(r.beta.clone(), None);
        let direct: f64 = x
            .iter()
            .zip(&g)
            .map(|(row, gi)| pol.treat_probability(&row[1..]).unwrap() * gi)
            .sum::<f64>()
            / 40.0;
        assert!((direct - r.objective).abs() < 1e-9);
    }

    #[test]
    fn basis_checks() {
        let p = LogisticPolicy::identity(vec![0.0, 1.0], Some(vec![2]));
        assert!((p.treat_probability(&[9.0, 9.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(p.treat_probability(&[0.0]).is_err());
        assert!(LogisticPolicy::identity(vec![0.0, 1.0], None).treat_probability(&[1.0, 2.0]).is_err());
    }
}
