//! Simulation design with a binary latent confounder, its closed-form
//! nuisance functions, policy evaluation and the sensitivity sweep.
//!
//! The latent `U` shifts the nominal odds of treatment by `lambda*^(±1)`,
//! so the design satisfies the sensitivity model exactly at `lambda*`.
//! Given `A = a`, `U` is Bernoulli with a probability that does not depend
//! on `x` (`lambda*/(1+lambda*)` when treated, `1/(1+lambda*)` otherwise),
//! so `Y - m_a(x)` is the same two-component normal mixture everywhere.

pub mod eval;
pub mod quadrature;
pub mod standin;
pub mod sweep;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::{validate_dataset, Dataset, Observation, SensitivityParam};
use crate::error::{Error, Result};
use crate::folds::rng_from_seed;
use crate::nuisance::NuisanceOracle;

pub use eval::{class_sup, estimate_regret, evaluate_policy, logistic_class_sup, OracleEval, PolicyMetrics, Regret};
pub use sweep::{run_sweep, summarize, Method, SummaryRow, SweepConfig, SweepResult, SweepRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgpConfig {
    pub log_lambda_star: f64,
    pub mu_x: [f64; 2],
    pub theta: [f64; 6],
    pub beta_cons: f64,
    pub beta_a: f64,
    pub beta_x: [f64; 2],
    pub beta_xa: [f64; 2],
    pub beta_u: f64,
    pub noise_sd: f64,
    pub n: usize,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            log_lambda_star: 1.5,
            mu_x: [-1.0, 1.0],
            theta: [0.2, 0.4, 0.1, -0.1, 0.5, -0.5],
            beta_cons: -0.2,
            beta_a: -0.1,
            beta_x: [1.0, -1.0],
            beta_xa: [0.2, 0.4],
            beta_u: 1.5,
            noise_sd: 1.0,
            n: 2000,
        }
    }
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.log_lambda_star, self.beta_cons, self.beta_a, self.beta_u, self.noise_sd]
            .iter()
            .chain(&self.mu_x)
            .chain(&self.theta)
            .chain(&self.beta_x)
            .chain(&self.beta_xa)
            .all(|v| v.is_finite());
        if !finite || self.log_lambda_star < 0.0 || !(self.noise_sd > 0.0) || self.n == 0 {
            return Err(Error::BadConfig("simulation parameters must be finite with n >= 1 and noise_sd > 0".into()));
        }
        Ok(())
    }

    pub fn lambda_star(&self) -> f64 {
        self.log_lambda_star.exp()
    }

    /// `[max(x1,0), x1 x2^2/10, sin(x2^2), x1, x2, 1]`.
    pub fn features(x: &[f64]) -> [f64; 6] {
        let (x1, x2) = (x[0], x[1]);
        [x1.max(0.0), x1 * x2 * x2 / 10.0, (x2 * x2).sin(), x1, x2, 1.0]
    }

    /// Nominal propensity `P(A=1 | X=x)`.
    pub fn propensity(&self, x: &[f64]) -> f64 {
        sigmoid(Self::features(x).iter().zip(&self.theta).map(|(f, t)| f * t).sum())
    }

    /// `P(U=1 | X=x)`.
    pub fn latent_probability(&self, x: &[f64]) -> f64 {
        let l = self.lambda_star();
        let e = self.propensity(x);
        l / (1.0 + l) * e + 1.0 / (1.0 + l) * (1.0 - e)
    }

    /// `P(A=1 | U=u, X=x)`.
    pub fn true_propensity(&self, x: &[f64], u: u8) -> f64 {
        let e = self.propensity(x);
        e / (e + self.lambda_star().powi(1 - 2 * i32::from(u)) * (1.0 - e))
    }

    /// `P(U=1 | X, A=a)`, constant in `x`.
    pub fn latent_given_arm(&self, a: usize) -> f64 {
        let l = self.lambda_star();
        if a == 1 {
            l / (1.0 + l)
        } else {
            1.0 / (1.0 + l)
        }
    }

    /// Outcome mean excluding the latent and noise terms.
    pub fn structural_mean(&self, x: &[f64], a: usize) -> f64 {
        let af = a as f64;
        self.beta_cons
            + self.beta_a * af
            + x[0] * self.beta_x[0]
            + x[1] * self.beta_x[1]
            + af * (x[0] * self.beta_xa[0] + x[1] * self.beta_xa[1])
    }

    /// Conditional average treatment effect `E[Y(1) - Y(0) | X=x]`.
    pub fn cate(&self, x: &[f64]) -> f64 {
        self.structural_mean(x, 1) - self.structural_mean(x, 0)
    }
}

/// One simulated unit with both potential outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSample {
    pub x: Vec<f64>,
    pub u: u8,
    pub a: usize,
    pub y0: f64,
    pub y1: f64,
    pub y: f64,
}

/// Draws `config.n` units. Both potential outcomes share the same noise draw.
pub fn generate(config: &DgpConfig, seed: u64) -> Result<Vec<PotentialSample>> {
    config.validate()?;
    let mut rng = rng_from_seed(seed);
    let out = (0..config.n)
        .map(|_| {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let x = vec![config.mu_x[0] + z1, config.mu_x[1] + z2];
            let u = u8::from(rng.random::<f64>() < config.latent_probability(&x));
            let a = usize::from(rng.random::<f64>() < config.true_propensity(&x, u));
            let eps: f64 = rng.sample::<f64, _>(StandardNormal) * config.noise_sd;
            let shared = config.beta_u * f64::from(u) + eps;
            let y0 = config.structural_mean(&x, 0) + shared;
            let y1 = config.structural_mean(&x, 1) + shared;
            let y = if a == 1 { y1 } else { y0 };
            PotentialSample { x, u, a, y0, y1, y }
        })
        .collect();
    Ok(out)
}

/// Observed part of a simulated sample.
pub fn to_dataset(samples: &[PotentialSample]) -> Result<Dataset> {
    validate_dataset(samples.iter().map(|s| Observation { x: s.x.clone(), a: s.a, y: s.y }).collect(), 2)
}

/// Law of `Y - m_a(x)` given `A = a`: mixture of `N(0, sd^2)` and
/// `N(beta_u, sd^2)` with weight `w` on the second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualMixture {
    pub w: f64,
    pub shift: f64,
    pub sd: f64,
}

impl ResidualMixture {
    fn components(&self) -> [(f64, f64); 2] {
        [(1.0 - self.w, 0.0), (self.w, self.shift)]
    }

    pub fn cdf(&self, c: f64) -> f64 {
        self.components().iter().map(|&(p, mu)| p * norm_cdf((c - mu) / self.sd)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.w * self.shift
    }

    /// `E[R 1{R < c}]`, from `E[Z 1{Z<c}] = mu Phi((c-mu)/s) - s phi((c-mu)/s)`.
    pub fn partial_mean_below(&self, c: f64) -> f64 {
        self.components()
            .iter()
            .map(|&(p, mu)| {
                let z = (c - mu) / self.sd;
                p * (mu * norm_cdf(z) - self.sd * norm_pdf(z))
            })
            .sum()
    }

    /// Solves `cdf(c) = level` by bisection on a bracket that always holds.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::RootBracketFailure(format!("level {level} outside (0, 1)")));
        }
        let pad = 40.0 * self.sd;
        let (mut lo, mut hi) = (self.shift.min(0.0) - pad, self.shift.max(0.0) + pad);
        if !(self.cdf(lo) < level && self.cdf(hi) > level) {
            return Err(Error::RootBracketFailure(format!("level {level}")));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Closed-form nuisances of the simulation design at an analysis `lambda`.
#[derive(Debug, Clone)]
pub struct DgpOracle {
    config: DgpConfig,
    lambda: SensitivityParam,
    residual: [ResidualMixture; 2],
    /// `[arm][0 = lower level, 1 = upper level]` quantile offsets.
    offsets: [[f64; 2]; 2],
}

/// Sharp bounds on both arm means at one `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmBounds {
    pub mu_lo: [f64; 2],
    pub mu_hi: [f64; 2],
}

impl ArmBounds {
    pub fn tau_lo(&self) -> f64 {
        self.mu_lo[1] - self.mu_hi[0]
    }
    pub fn tau_hi(&self) -> f64 {
        self.mu_hi[1] - self.mu_lo[0]
    }
}

impl DgpOracle {
    pub fn new(config: &DgpConfig, lambda: SensitivityParam) -> Result<Self> {
        config.validate()?;
        let residual = [0, 1].map(|a| ResidualMixture {
            w: config.latent_given_arm(a),
            shift: config.beta_u,
            sd: config.noise_sd,
        });
        let mut offsets = [[0.0; 2]; 2];
        for a in 0..2 {
            offsets[a] = [residual[a].quantile(lambda.lower_level())?, residual[a].quantile(lambda.upper_level())?];
        }
        Ok(Self { config: config.clone(), lambda, residual, offsets })
    }

    pub fn config(&self) -> &DgpConfig {
        &self.config
    }
    pub fn lambda(&self) -> SensitivityParam {
        self.lambda
    }
    pub fn residual(&self, arm: usize) -> ResidualMixture {
        self.residual[arm]
    }

    /// `E[Y | X=x, A=a]`.
    pub fn conditional_mean(&self, x: &[f64], a: usize) -> f64 {
        self.config.structural_mean(x, a) + self.residual[a].mean()
    }

    fn offset(&self, a: usize, level: f64) -> f64 {
        if level == self.lambda.lower_level() {
            self.offsets[a][0]
        } else if level == self.lambda.upper_level() {
            self.offsets[a][1]
        } else {
            self.residual[a].quantile(level).expect("mixture CDF is continuous and strictly increasing")
        }
    }

    /// Sharp bounds at `x` using the exact nominal propensity.
    pub fn bounds_at(&self, x: &[f64]) -> ArmBounds {
        let l = self.lambda.value();
        let e1 = self.config.propensity(x);
        let mut mu_lo = [0.0; 2];
        let mut mu_hi = [0.0; 2];
        for a in 0..2 {
            let e = if a == 1 { e1 } else { 1.0 - e1 };
            let mean = self.conditional_mean(x, a);
            let base = self.config.structural_mean(x, a);
            let r = &self.residual[a];
            let parts = |c: f64| {
                let below = base * r.cdf(c) + r.partial_mean_below(c);
                (below, mean - below)
            };
            let (b_lo, a_lo) = parts(self.offsets[a][0]);
            let (b_hi, a_hi) = parts(self.offsets[a][1]);
            mu_lo[a] = e * mean + (1.0 - e) * (l * b_lo + a_lo / l);
            mu_hi[a] = e * mean + (1.0 - e) * (b_hi / l + l * a_hi);
        }
        ArmBounds { mu_lo, mu_hi }
    }
}

impl NuisanceOracle for DgpOracle {
    fn propensity(&self, x: &[f64]) -> Vec<f64> {
        let e = self.config.propensity(x);
        vec![1.0 - e, e]
    }

    fn quantile(&self, x: &[f64], arm: usize, level: f64) -> f64 {
        self.config.structural_mean(x, arm) + self.offset(arm, level)
    }

    fn truncated_below(&self, x: &[f64], arm: usize, q: f64) -> f64 {
        let base = self.config.structural_mean(x, arm);
        let r = &self.residual[arm];
        base * r.cdf(q - base) + r.partial_mean_below(q - base)
    }

    fn truncated_above(&self, x: &[f64], arm: usize, q: f64) -> f64 {
        self.conditional_mean(x, arm) - self.truncated_below(x, arm, q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn symmetric_point() {
        let c = DgpConfig::default();
        // find x with e(x) = 0.5 by solving in x2 along x1 = 0
        let f = |x2: f64| c.propensity(&[0.0, x2]) - 0.5;
        let (mut lo, mut hi) = (-5.0, 5.0);
        assert!(f(lo) * f(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let x = [0.0, 0.5 * (lo + hi)];
        assert!((c.latent_probability(&x) - 0.5).abs() < 1e-12);
        assert!((c.true_propensity(&x, 1) - 1.0 / (1.0 + 1.0 / c.lambda_star())).abs() < 1e-12);
        assert!((c.true_propensity(&x, 1) - 0.81759).abs() < 1e-4);
    }

    #[test]
    fn sensitivity_model_holds_exactly() {
        let c = DgpConfig::default();
        let samples = generate(&DgpConfig { n: 1000, ..c.clone() }, 3).unwrap();
        for s in &samples {
            let e = c.propensity(&s.x);
            let p1 = c.latent_probability(&s.x);
            let tower = p1 * c.true_propensity(&s.x, 1) + (1.0 - p1) * c.true_propensity(&s.x, 0);
            assert!((tower - e).abs() < 1e-12);
            for u in [0u8, 1] {
                let eo = c.true_propensity(&s.x, u);
                let ratio = (eo / (1.0 - eo)) / (e / (1.0 - e));
                let want = c.lambda_star().powi(2 * i32::from(u) - 1);
                assert!((ratio / want - 1.0).abs() < 1e-12);
            }
            assert_eq!(s.y, if s.a == 1 { s.y1 } else { s.y0 });
        }
    }

    #[test]
    fn latent_given_arm_by_bayes() {
        let c = DgpConfig::default();
        for x in [[0.3, -1.0], [-2.0, 2.5]] {
            let e = c.propensity(&x);
            let p1 = c.latent_probability(&x);
            let post1 = p1 * c.true_propensity(&x, 1) / e;
            let post0 = p1 * (1.0 - c.true_propensity(&x, 1)) / (1.0 - e);
            assert!((post1 - c.latent_given_arm(1)).abs() < 1e-12);
            assert!((post0 - c.latent_given_arm(0)).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_quantiles_and_partitions() {
        let c = DgpConfig::default();
        let lam = SensitivityParam::new(3.0).unwrap();
        let o = DgpOracle::new(&c, lam).unwrap();
        let x = [0.4, 1.7];
        for a in 0..2 {
            for level in [lam.lower_level(), lam.upper_level(), 0.2] {
                let q = o.quantile(&x, a, level);
                let f = o.residual(a).cdf(q - c.structural_mean(&x, a));
                assert!((f - level).abs() < 1e-10);
                let total = o.truncated_below(&x, a, q) + o.truncated_above(&x, a, q);
                assert!((total - o.conditional_mean(&x, a)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn without_latent_quantiles_are_normal() {
        let c = DgpConfig { beta_u: 0.0, ..Default::default() };
        let lam = SensitivityParam::new(2.0).unwrap();
        let o = DgpOracle::new(&c, lam).unwrap();
        let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(lam.upper_level());
        let x = [1.0, -0.5];
        for a in 0..2 {
            assert!((o.quantile(&x, a, lam.upper_level()) - (c.structural_mean(&x, a) + z)).abs() < 1e-10);
            assert!((o.quantile(&x, a, lam.lower_level()) - (c.structural_mean(&x, a) - z)).abs() < 1e-10);
        }
    }

    #[test]
    fn bounds_collapse_at_unit_lambda() {
        let c = DgpConfig::default();
        let o = DgpOracle::new(&c, SensitivityParam::one()).unwrap();
        let b = o.bounds_at(&[0.1, 0.9]);
        for a in 0..2 {
            assert!((b.mu_lo[a] - b.mu_hi[a]).abs() < 1e-12);
            assert!((b.mu_lo[a] - o.conditional_mean(&[0.1, 0.9], a)).abs() < 1e-12);
        }
    }

    #[test]
    fn served_nuisances_reproduce_oracle_bounds() {
        use crate::folds::make_folds;
        use crate::nuisance::NuisanceModel;
        let c = DgpConfig::default();
        let lambda = SensitivityParam::new(3.0).unwrap();
        let o = std::sync::Arc::new(DgpOracle::new(&c, lambda).unwrap());
        let model = NuisanceModel::from_oracle(o.clone(), lambda, make_folds(4, 2, 0).unwrap(), 2, 1e-6);
        for x in [[-1.0, 1.0], [0.3, -0.2], [-2.5, 2.0]] {
            let b = o.bounds_at(&x);
            let served = model.predict_fold(0, &x).mu_bounds(lambda);
            for (a, s) in served.iter().enumerate() {
                assert!((s.0 - b.mu_lo[a]).abs() < 1e-9, "{x:?} arm {a}");
                assert!((s.1 - b.mu_hi[a]).abs() < 1e-9, "{x:?} arm {a}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let c = DgpConfig { n: 5, ..Default::default() };
        assert_eq!(generate(&c, 7).unwrap(), generate(&c, 7).unwrap());
    }
}
