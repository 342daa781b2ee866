//! Doubly robust scores for worst-case welfare and worst-case improvement.
//!
//! With `r = (1 - e_t)/e_t`, `D = 1{a = t}` and `L = lambda`:
//!
//! ```text
//! phi_t^-  = y D [1 + r L^(-sgn(y - q-))]
//!          + q- D r (L - 1/L) [1/(1+L) - 1{y < q-}]
//!          - (1/e_t) [L rho_below + rho_above / L] (D - e_t)
//!
//! phi_t^+  = y D [1 + r L^(+sgn(y - q+))]
//!          - q+ D r (L - 1/L) [L/(1+L) - 1{y < q+}]
//!          - (1/e_t) [rho_below / L + L rho_above] (D - e_t)
//! ```
//!
//! where `rho_below = E[Y 1{Y < q}|X, A=t]` and `rho_above = E[Y 1{Y > q}|X, A=t]`
//! at the matching quantile. At `L = 1` both reduce to the AIPW score.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::sgn;
use crate::data::{fmt_f64, Dataset, SensitivityParam};
use crate::error::{Error, Result};
use crate::nuisance::{NuisanceModel, SideNuisance};

fn check_propensity(e: f64) -> Result<()> {
    if e > 0.0 && e < 1.0 {
        Ok(())
    } else {
        Err(Error::PropensityOutOfRange(e))
    }
}

/// Score for the lower bound on `E[Y(t)]`.
#[allow(clippy::too_many_arguments)]
pub fn phi_minus(
    y: f64,
    a: usize,
    t: usize,
    e_t: f64,
    q: f64,
    rho_below: f64,
    rho_above: f64,
    lambda: SensitivityParam,
) -> Result<f64> {
    check_propensity(e_t)?;
    let l = lambda.value();
    let d = f64::from(u8::from(a == t));
    let r = (1.0 - e_t) / e_t;
    let below = f64::from(u8::from(y < q));
    let plug_in = y * d * (1.0 + r * l.powf(-sgn(y - q)));
    let quantile_correction = q * d * r * (l - 1.0 / l) * (lambda.lower_level() - below);
    let propensity_correction = -(l * rho_below + rho_above / l) * (d - e_t) / e_t;
    Ok(plug_in + quantile_correction + propensity_correction)
}

/// Score for the upper bound on `E[Y(t)]`.
#[allow(clippy::too_many_arguments)]
pub fn phi_plus(
    y: f64,
    a: usize,
    t: usize,
    e_t: f64,
    q: f64,
    rho_below: f64,
    rho_above: f64,
    lambda: SensitivityParam,
) -> Result<f64> {
    check_propensity(e_t)?;
    let l = lambda.value();
    let d = f64::from(u8::from(a == t));
    let r = (1.0 - e_t) / e_t;
    let below = f64::from(u8::from(y < q));
    let plug_in = y * d * (1.0 + r * l.powf(sgn(y - q)));
    let quantile_correction = -q * d * r * (l - 1.0 / l) * (lambda.upper_level() - below);
    let propensity_correction = -(rho_below / l + l * rho_above) * (d - e_t) / e_t;
    Ok(plug_in + quantile_correction + propensity_correction)
}

/// Plug-in part of [`phi_minus`] alone; not orthogonal, kept for probes.
pub fn phi_minus_plug_in(y: f64, a: usize, t: usize, e_t: f64, q: f64, lambda: SensitivityParam) -> Result<f64> {
    crate::bounds::mu_bound_pointwise(y, a, t, e_t, q, lambda, crate::bounds::BoundSide::Lower)
}

/// `sum_t phi_t^- pi(t|x)`.
pub fn psi_w(phi_minus_row: &[f64], probs: &[f64]) -> Result<f64> {
    if phi_minus_row.len() != probs.len() {
        return Err(Error::DimensionMismatch { expected: phi_minus_row.len(), got: probs.len() });
    }
    Ok(phi_minus_row.iter().zip(probs).map(|(s, p)| s * p).sum())
}

/// `pi(x) [phi_1^- - phi_0^+]` for a binary treatment.
pub fn psi_delta(phi_minus_row: &[f64], phi_plus_row: &[f64], treat_prob: f64) -> Result<f64> {
    if phi_minus_row.len() != 2 {
        return Err(Error::NotBinary(phi_minus_row.len()));
    }
    if phi_plus_row.len() != 2 {
        return Err(Error::NotBinary(phi_plus_row.len()));
    }
    Ok(treat_prob * (phi_minus_row[1] - phi_plus_row[0]))
}

/// Where the nuisances behind a score table came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSource {
    Crossfit,
    Oracle,
}

/// Sample mean with its i.i.d. standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_values(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { value: mean, se: (var / n).sqrt() }
    }
}

/// Per-unit, per-arm scores. `phi_plus` holds every arm when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    phi_minus: Vec<Vec<f64>>,
    phi_plus: Option<Vec<Vec<f64>>>,
    lambda: SensitivityParam,
    source: ScoreSource,
}

impl ScoreTable {
    /// Checks shapes and finiteness.
    pub fn new(
        phi_minus: Vec<Vec<f64>>,
        phi_plus: Option<Vec<Vec<f64>>>,
        lambda: SensitivityParam,
        source: ScoreSource,
    ) -> Result<Self> {
        if phi_minus.is_empty() {
            return Err(Error::EmptyData);
        }
        let m = phi_minus[0].len();
        for (name, table) in [("phi_minus", Some(&phi_minus)), ("phi_plus", phi_plus.as_ref())] {
            let Some(table) = table else { continue };
            if table.len() != phi_minus.len() {
                return Err(Error::DimensionMismatch { expected: phi_minus.len(), got: table.len() });
            }
            for (i, row) in table.iter().enumerate() {
                if row.len() != m {
                    return Err(Error::DimensionMismatch { expected: m, got: row.len() });
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { row: i, column: name.into() });
                }
            }
        }
        Ok(Self { phi_minus, phi_plus, lambda, source })
    }

    pub fn n(&self) -> usize {
        self.phi_minus.len()
    }
    pub fn m(&self) -> usize {
        self.phi_minus[0].len()
    }
    pub fn lambda(&self) -> SensitivityParam {
        self.lambda
    }
    pub fn source(&self) -> ScoreSource {
        self.source
    }
    pub fn phi_minus(&self) -> &[Vec<f64>] {
        &self.phi_minus
    }
    pub fn phi_plus(&self) -> Option<&[Vec<f64>]> {
        self.phi_plus.as_deref()
    }

    fn plus(&self) -> Result<&[Vec<f64>]> {
        self.phi_plus().ok_or_else(|| Error::MissingNuisance("upper-side scores".into()))
    }

    /// Per-unit gain of arm 1 over arm 0 for the worst-case welfare.
    pub fn welfare_gains(&self) -> Result<Vec<f64>> {
        if self.m() != 2 {
            return Err(Error::NotBinary(self.m()));
        }
        Ok(self.phi_minus.iter().map(|r| r[1] - r[0]).collect())
    }

    /// Per-unit `phi_1^- - phi_0^+` for the worst-case improvement.
    pub fn improvement_gains(&self) -> Result<Vec<f64>> {
        if self.m() != 2 {
            return Err(Error::NotBinary(self.m()));
        }
        Ok(self.phi_minus.iter().zip(self.plus()?).map(|(lo, hi)| lo[1] - hi[0]).collect())
    }

    /// Writes `unit,arm,phi_minus[,phi_plus]` in long format.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        let mut header = vec!["unit", "arm", "phi_minus"];
        if self.phi_plus.is_some() {
            header.push("phi_plus");
        }
        w.write_record(&header).map_err(csv_err)?;
        for (i, row) in self.phi_minus.iter().enumerate() {
            for (t, v) in row.iter().enumerate() {
                let mut rec = vec![i.to_string(), t.to_string(), fmt_f64(*v)];
                if let Some(p) = &self.phi_plus {
                    rec.push(fmt_f64(p[i][t]));
                }
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Cross-fitted worst-case welfare of a policy given its per-unit
/// arm probabilities.
pub fn estimate_w(table: &ScoreTable, probs: &[Vec<f64>]) -> Result<Estimate> {
    if probs.len() != table.n() {
        return Err(Error::DimensionMismatch { expected: table.n(), got: probs.len() });
    }
    let v = table.phi_minus.iter().zip(probs).map(|(s, p)| psi_w(s, p)).collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_values(&v))
}

/// Cross-fitted worst-case improvement over never-treat.
pub fn estimate_delta(table: &ScoreTable, treat_probs: &[f64]) -> Result<Estimate> {
    if treat_probs.len() != table.n() {
        return Err(Error::DimensionMismatch { expected: table.n(), got: treat_probs.len() });
    }
    let plus = table.plus()?;
    let v = table
        .phi_minus
        .iter()
        .zip(plus)
        .zip(treat_probs)
        .map(|((lo, hi), &p)| psi_delta(lo, hi, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_values(&v))
}

/// Worst-case improvement of `pi` over a baseline `pi0`. Where `pi`
/// treats more, the gain is bounded by `phi_1^- - phi_0^+`; where it
/// treats less, the forgone effect is bounded by `phi_1^+ - phi_0^-`.
pub fn estimate_delta_vs_baseline(table: &ScoreTable, treat_probs: &[f64], baseline: &[f64]) -> Result<Estimate> {
    if table.m() != 2 {
        return Err(Error::NotBinary(table.m()));
    }
    for p in [treat_probs, baseline] {
        if p.len() != table.n() {
            return Err(Error::DimensionMismatch { expected: table.n(), got: p.len() });
        }
    }
    let plus = table.plus()?;
    let v: Vec<f64> = (0..table.n())
        .map(|i| {
            let w = treat_probs[i] - baseline[i];
            let lo = &table.phi_minus[i];
            let hi = &plus[i];
            if w > 0.0 {
                w * (lo[1] - hi[0])
            } else if w < 0.0 {
                w * (hi[1] - lo[0])
            } else {
                0.0
            }
        })
        .collect();
    Ok(Estimate::from_values(&v))
}

fn arm_scores(
    y: f64,
    a: usize,
    t: usize,
    e_t: f64,
    side: &SideNuisance,
    lambda: SensitivityParam,
    upper: bool,
) -> Result<f64> {
    let f = if upper { phi_plus } else { phi_minus };
    f(y, a, t, e_t, side.q, side.rho_below, side.rho_above, lambda)
}

/// Scores every unit with the nuisances of the model that excluded its fold.
pub fn build_score_table(dataset: &Dataset, model: &NuisanceModel, need_plus: bool) -> Result<ScoreTable> {
    if model.m() != dataset.m() {
        return Err(Error::DimensionMismatch { expected: dataset.m(), got: model.m() });
    }
    if model.folds().n() != dataset.n() {
        return Err(Error::DimensionMismatch { expected: dataset.n(), got: model.folds().n() });
    }
    if need_plus && !model.has_upper() {
        return Err(Error::MissingNuisance("upper-level quantile and truncated means".into()));
    }
    let lambda = model.lambda();
    let m = dataset.m();
    let rows: Vec<(Vec<f64>, Option<Vec<f64>>)> = dataset
        .rows()
        .par_iter()
        .enumerate()
        .map(|(i, obs)| -> Result<_> {
            let nu = model.predict_unit(i, &obs.x);
            let lo = (0..m)
                .map(|t| arm_scores(obs.y, obs.a, t, nu.propensity[t], &nu.arms[t].lower, lambda, false))
                .collect::<Result<Vec<_>>>()?;
            let hi = if need_plus {
                Some(
                    (0..m)
                        .map(|t| {
                            let side = nu.arms[t].upper.as_ref().expect("checked above");
                            arm_scores(obs.y, obs.a, t, nu.propensity[t], side, lambda, true)
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                None
            };
            Ok((lo, hi))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (phi_minus, plus): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let phi_plus = if need_plus { Some(plus.into_iter().map(Option::unwrap).collect()) } else { None };
    let source = if model.is_oracle() { ScoreSource::Oracle } else { ScoreSource::Crossfit };
    ScoreTable::new(phi_minus, phi_plus, lambda, source)
}
