//! Sharp bounds on conditional means and CATEs under the marginal
//! sensitivity model, first-best decision rules, and a sort-based linear
//! program that computes the same bounds by direct optimization over
//! balancing-constrained inverse-propensity weights.
//!
//! The closed form is exposed as a pointwise integrand,
//!
//! ```text
//!   y * 1{a_obs = t} * [1 + (1 - e_t)/e_t * lambda^(±sgn(y - q±))]
//! ```
//!
//! with `sgn(0) = +1`. Conditional-mean bounds are averages of it, taken by
//! callers (sample means in `scores`, exact integrals in `simlab`).
//!
//! For a law with an atom exactly at the quantile the averaged integrand
//! violates the balancing constraint and differs from the LP value; the
//! LP oracle is exact for any finite law.

use serde::{Deserialize, Serialize};

use crate::data::SensitivityParam;
use crate::error::{Error, Result};

/// Which endpoint of an identified interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSide {
    Lower,
    Upper,
}

impl BoundSide {
    /// Quantile level paired with this side.
    pub fn level(self, lambda: SensitivityParam) -> f64 {
        match self {
            BoundSide::Lower => lambda.lower_level(),
            BoundSide::Upper => lambda.upper_level(),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            BoundSide::Lower => BoundSide::Upper,
            BoundSide::Upper => BoundSide::Lower,
        }
    }

    fn sign(self) -> f64 {
        match self {
            BoundSide::Lower => -1.0,
            BoundSide::Upper => 1.0,
        }
    }
}

/// `sgn(t) = 1` for `t >= 0`, `-1` otherwise.
#[inline]
pub fn sgn(t: f64) -> f64 {
    if t >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Exponent convention for the closed-form integrand. `Flipped` exists only
/// so the self-check can prove it detects a corrupted sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignConvention {
    #[default]
    Standard,
    Flipped,
}

/// Closed-form bound integrand for arm `t` at one observation.
pub fn mu_bound_pointwise(
    y: f64,
    a_obs: usize,
    t: usize,
    e_t: f64,
    q: f64,
    lambda: SensitivityParam,
    side: BoundSide,
) -> Result<f64> {
    mu_bound_pointwise_with(y, a_obs, t, e_t, q, lambda, side, SignConvention::Standard)
}

#[allow(clippy::too_many_arguments)]
pub fn mu_bound_pointwise_with(
    y: f64,
    a_obs: usize,
    t: usize,
    e_t: f64,
    q: f64,
    lambda: SensitivityParam,
    side: BoundSide,
    convention: SignConvention,
) -> Result<f64> {
    if !(e_t > 0.0 && e_t < 1.0) {
        return Err(Error::PropensityOutOfRange(e_t));
    }
    if a_obs != t {
        return Ok(0.0);
    }
    let mut exponent = side.sign() * sgn(y - q);
    if convention == SignConvention::Flipped {
        exponent = -exponent;
    }
    let odds = (1.0 - e_t) / e_t;
    Ok(y * (1.0 + odds * lambda.value().powf(exponent)))
}

/// `(lower, upper)` endpoints of an identified interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
}

impl BoundPair {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower > upper + 1e-12 {
            return Err(Error::UnorderedInput { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Law of `Y` given `X = x, A = arm` with finite support, plus the nominal
/// propensity of that arm at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteConditionalLaw {
    arm: usize,
    propensity: f64,
    support: Vec<(f64, f64)>,
}

impl FiniteConditionalLaw {
    /// Sorts the support by outcome and merges duplicate outcomes.
    pub fn new(arm: usize, propensity: f64, support: Vec<(f64, f64)>) -> Result<Self> {
        if !(propensity > 0.0 && propensity < 1.0) {
            return Err(Error::PropensityOutOfRange(propensity));
        }
        if support.is_empty() {
            return Err(Error::BadLaw("empty support".into()));
        }
        if support.iter().any(|&(y, p)| !y.is_finite() || !(p > 0.0) || !p.is_finite()) {
            return Err(Error::BadLaw("outcomes must be finite and probabilities positive".into()));
        }
        let total: f64 = support.iter().map(|s| s.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::BadLaw(format!("probabilities sum to {total}")));
        }
        let mut sorted = support;
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
        for (y, p) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == y => last.1 += p,
                _ => merged.push((y, p)),
            }
        }
        Ok(Self { arm, propensity, support: merged })
    }

    /// Equally weighted atoms.
    pub fn uniform_atoms(arm: usize, propensity: f64, ys: &[f64]) -> Result<Self> {
        let p = 1.0 / ys.len() as f64;
        let support = ys.iter().map(|&y| (y, p)).collect::<Vec<_>>();
        // Rounding can leave the sum a few ulps off; renormalize the last atom.
        let mut law = Self::new_unchecked_sum(arm, propensity, support)?;
        let s: f64 = law.support.iter().map(|a| a.1).sum();
        if let Some(last) = law.support.last_mut() {
            last.1 += 1.0 - s;
        }
        Ok(law)
    }

    fn new_unchecked_sum(arm: usize, propensity: f64, support: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = support.iter().map(|s| s.1).sum();
        let scaled = support.into_iter().map(|(y, p)| (y, p / total)).collect::<Vec<_>>();
        let s: f64 = scaled.iter().map(|a| a.1).sum();
        let mut scaled = scaled;
        if let Some(last) = scaled.last_mut() {
            last.1 += 1.0 - s;
        }
        Self::new(arm, propensity, scaled)
    }

    pub fn arm(&self) -> usize {
        self.arm
    }
    pub fn propensity(&self) -> f64 {
        self.propensity
    }
    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().map(|&(y, p)| y * p).sum()
    }

    /// `inf { q : F(q) >= level }`.
    pub fn quantile(&self, level: f64) -> f64 {
        let mut cum = 0.0;
        for &(y, p) in &self.support {
            cum += p;
            if cum >= level - 1e-14 {
                return y;
            }
        }
        self.support.last().map(|s| s.0).unwrap_or(f64::NAN)
    }

    /// `E[Y 1{Y < q}]`.
    pub fn truncated_below(&self, q: f64) -> f64 {
        self.support.iter().filter(|s| s.0 < q).map(|&(y, p)| y * p).sum()
    }

    /// `E[Y 1{Y > q}]`.
    pub fn truncated_above(&self, q: f64) -> f64 {
        self.support.iter().filter(|s| s.0 > q).map(|&(y, p)| y * p).sum()
    }

    /// Average of the closed-form integrand over the law at quantile `q`:
    /// the bound on `E[Y(arm) | X = x]` when `q` is the exact quantile of a
    /// law without an atom at `q`.
    pub fn closed_form_bound(&self, lambda: SensitivityParam, side: BoundSide, q: f64) -> f64 {
        self.closed_form_bound_with(lambda, side, q, SignConvention::Standard)
    }

    pub fn closed_form_bound_with(
        &self,
        lambda: SensitivityParam,
        side: BoundSide,
        q: f64,
        convention: SignConvention,
    ) -> f64 {
        let e = self.propensity;
        e * self
            .support
            .iter()
            .map(|&(y, p)| {
                p * mu_bound_pointwise_with(y, self.arm, self.arm, e, q, lambda, side, convention)
                    .expect("propensity validated at construction")
            })
            .sum::<f64>()
    }
}

/// Direction of the linear program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
}

/// Optimum of the balancing-constrained weight program.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpBound {
    /// Bound on `E[Y(arm) | X = x]`.
    pub value: f64,
    /// Optimal inverse-propensity weights, aligned with the law's support.
    pub weights: Vec<f64>,
    /// Weight box `[low, high]`.
    pub weight_box: (f64, f64),
}

/// Exact optimum of
///
/// ```text
///   optimize  e * sum_j p_j y_j w_j
///   s.t.      1 + r/lambda <= w_j <= 1 + r*lambda,   r = (1 - e)/e
///             sum_j p_j w_j = 1/e
/// ```
///
/// Every weight starts at the low end; the remaining budget
/// `r (1 - 1/lambda)` is poured onto the largest (max) or smallest (min)
/// outcomes first, leaving at most one fractional weight.
pub fn sharp_bound_finite(
    law: &FiniteConditionalLaw,
    lambda: SensitivityParam,
    direction: Direction,
) -> Result<SharpBound> {
    let e = law.propensity;
    let lam = lambda.value();
    let r = (1.0 - e) / e;
    let low = 1.0 + r / lam;
    let high = 1.0 + r * lam;
    let n = law.support.len();
    let mut weights = vec![low; n];
    let mut budget = r * (1.0 - 1.0 / lam);
    let capacity = r * (lam - 1.0 / lam);
    if capacity + 1e-15 < budget {
        return Err(Error::Infeasible);
    }
    let order: Box<dyn Iterator<Item = usize>> = match direction {
        Direction::Max => Box::new((0..n).rev()),
        Direction::Min => Box::new(0..n),
    };
    for j in order {
        if budget <= 0.0 {
            break;
        }
        let p = law.support[j].1;
        let room = p * (high - low);
        if room <= budget {
            weights[j] = high;
            budget -= room;
        } else {
            weights[j] = low + budget / p;
            budget = 0.0;
        }
    }
    let value = e * law
        .support
        .iter()
        .zip(&weights)
        .map(|(&(y, p), w)| p * y * w)
        .sum::<f64>();
    Ok(SharpBound { value, weights, weight_box: (low, high) })
}

/// CATE bounds `(mu_lo(1) - mu_hi(0), mu_hi(1) - mu_lo(0))`.
pub fn tau_bounds(mu_lo_1: f64, mu_hi_1: f64, mu_lo_0: f64, mu_hi_0: f64) -> Result<BoundPair> {
    BoundPair::new(mu_lo_1, mu_hi_1)?;
    BoundPair::new(mu_lo_0, mu_hi_0)?;
    BoundPair::new(mu_lo_1 - mu_hi_0, mu_hi_1 - mu_lo_0)
}

/// First-best max-min welfare rule: treat iff `mu_lo(1) > mu_lo(0)`.
pub fn first_best_mmw(mu_lo_1: f64, mu_lo_0: f64) -> usize {
    usize::from(mu_lo_1 - mu_lo_0 > 0.0)
}

/// First-best max-min improvement rule: treat iff `tau_lo > 0`.
pub fn first_best_mmi(tau_lo: f64) -> usize {
    usize::from(tau_lo > 0.0)
}

/// Three-case comparison rule: treat if the interval is positive, withhold
/// if negative, otherwise treat iff the upper end dominates in magnitude.
pub fn pz_rule(tau_lo: f64, tau_hi: f64) -> Result<usize> {
    if tau_lo > tau_hi {
        return Err(Error::UnorderedInput { lower: tau_lo, upper: tau_hi });
    }
    if tau_lo > 0.0 {
        Ok(1)
    } else if tau_hi < 0.0 {
        Ok(0)
    } else {
        Ok(usize::from(tau_hi.abs() > tau_lo.abs()))
    }
}
