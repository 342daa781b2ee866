//! Repeated learn-and-evaluate runs over a grid of analysis `lambda`.
//!
//! Each repetition draws a training sample, learns the AW policy once
//! (MMW at `lambda = 1`) and MMW/MMI policies at every grid point, and
//! evaluates all of them on one shared fresh sample. Scores within a
//! repetition and grid point are shared by MMW and MMI.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{class_sup, logistic_class_sup, OracleEval, PolicyMetrics};
use super::{generate, to_dataset, DgpConfig, DgpOracle};
use crate::data::{fmt_f64, SensitivityParam};
use crate::error::{Error, Result};
use crate::folds::mix_seed;
use crate::nuisance::gbt::GbtParams;
use crate::nuisance::{fit_crossfit_with, LearnerKind, NuisanceOracle, NuisanceSpec};
use crate::policy::{learn_from_scores, AscentOptions, Criterion, PolicyClass};
use crate::scores::build_score_table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "AW")]
    Aw,
    #[serde(rename = "MMW")]
    Mmw,
    #[serde(rename = "MMI")]
    Mmi,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Aw, Method::Mmw, Method::Mmi];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Aw => "AW",
            Method::Mmw => "MMW",
            Method::Mmi => "MMI",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_grid() -> Vec<f64> {
    (1..=35).map(|k| f64::from(k) / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub dgp: DgpConfig,
    pub log_lambda_grid: Vec<f64>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub n: usize,
    pub eval_n: usize,
    pub seed: u64,
    pub class: PolicyClass,
    pub learner: LearnerKind,
    pub gbt: GbtParams,
    pub k: usize,
    pub clip_kappa: f64,
    /// Logistic class only: prefix of the evaluation sample used to search
    /// for the class optimum when computing regrets.
    pub regret_fit_n: usize,
    pub regret_ascent: AscentOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            dgp: DgpConfig::default(),
            log_lambda_grid: default_grid(),
            methods: Method::ALL.to_vec(),
            reps: 100,
            n: 2000,
            eval_n: 100_000,
            seed: 0,
            class: PolicyClass::Logistic {
                features: Some(vec![0, 1]),
                ascent: AscentOptions { restarts: 4, max_iter: 200, grad_tol: 1e-8 },
            },
            learner: LearnerKind::Oracle,
            gbt: GbtParams::default(),
            k: 10,
            clip_kappa: 0.01,
            regret_fit_n: 20_000,
            regret_ascent: AscentOptions { restarts: 4, max_iter: 200, grad_tol: 1e-8 },
        }
    }
}

impl SweepConfig {
    /// Reduced repetitions and evaluation sample for quick runs.
    pub fn smoke(mut self) -> Self {
        self.reps = 20;
        self.eval_n = 10_000;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.log_lambda_grid.is_empty() {
            return Err(Error::BadConfig("log_lambda_grid must be nonempty".into()));
        }
        for &l in &self.log_lambda_grid {
            SensitivityParam::from_log(l)?;
        }
        if self.methods.is_empty() || self.reps == 0 || self.n < 2 || self.eval_n == 0 {
            return Err(Error::BadConfig("methods, reps, n and eval_n must be nonempty/positive".into()));
        }
        if self.k < 2 || self.k > self.n {
            return Err(Error::BadK { k: self.k, n: self.n });
        }
        self.nuisance_spec(SensitivityParam::one()).validate()
    }

    fn nuisance_spec(&self, lambda: SensitivityParam) -> NuisanceSpec {
        NuisanceSpec {
            learner: self.learner,
            gbt: self.gbt,
            neighbors: None,
            clip_kappa: self.clip_kappa,
            lambda,
            k: self.k,
            upper: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub log_lambda: f64,
    pub rep: usize,
    pub method: Method,
    pub treated_frac: f64,
    pub exp_welfare: f64,
    pub worst_welfare: f64,
    pub worst_improvement: f64,
    pub crw_regret: f64,
    pub cri_regret: f64,
}

impl SweepRow {
    pub const HEADER: &'static str =
        "log_lambda,rep,method,treated_frac,exp_welfare,worst_welfare,worst_improvement,crw_regret,cri_regret";

    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "treated_frac" => self.treated_frac,
            "exp_welfare" => self.exp_welfare,
            "worst_welfare" => self.worst_welfare,
            "worst_improvement" => self.worst_improvement,
            "crw_regret" => self.crw_regret,
            "cri_regret" => self.cri_regret,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Regrets are lower bounds (the class optimum was not found exactly).
    pub regret_lower_bound: bool,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", SweepRow::HEADER)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                fmt_f64(r.log_lambda),
                r.rep,
                r.method,
                fmt_f64(r.treated_frac),
                fmt_f64(r.exp_welfare),
                fmt_f64(r.worst_welfare),
                fmt_f64(r.worst_improvement),
                fmt_f64(r.crw_regret),
                fmt_f64(r.cri_regret),
            )?;
        }
        Ok(())
    }
}

/// Mean and `mean ± 1.96 sd` band across repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn from_values(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        Self { mean, sd, lo: mean - 1.96 * sd, hi: mean + 1.96 * sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub log_lambda: f64,
    pub method: Method,
    pub reps: usize,
    pub treated_frac: Band,
    pub exp_welfare: Band,
    pub worst_welfare: Band,
    pub worst_improvement: Band,
    pub crw_regret: Band,
    pub cri_regret: Band,
}

impl SummaryRow {
    pub fn band(&self, name: &str) -> Option<Band> {
        Some(match name {
            "treated_frac" => self.treated_frac,
            "exp_welfare" => self.exp_welfare,
            "worst_welfare" => self.worst_welfare,
            "worst_improvement" => self.worst_improvement,
            "crw_regret" => self.crw_regret,
            "cri_regret" => self.cri_regret,
            _ => return None,
        })
    }
}

/// Aggregates rows per `(log_lambda, method)`, sorted by both keys.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(u64, Method), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        // order-preserving key for finite floats of either sign
        let bits = r.log_lambda.to_bits();
        let key = if r.log_lambda.is_sign_negative() { !bits } else { bits | (1 << 63) };
        groups.entry((key, r.method)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let mut g = g;
            g.sort_by_key(|r| r.rep);
            let band = |f: fn(&SweepRow) -> f64| Band::from_values(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                log_lambda: g[0].log_lambda,
                method: g[0].method,
                reps: g.len(),
                treated_frac: band(|r| r.treated_frac),
                exp_welfare: band(|r| r.exp_welfare),
                worst_welfare: band(|r| r.worst_welfare),
                worst_improvement: band(|r| r.worst_improvement),
                crw_regret: band(|r| r.crw_regret),
                cri_regret: band(|r| r.cri_regret),
            }
        })
        .collect()
}

/// One repetition's metrics: `[grid index][method index]`.
type RepOutcome = Vec<Vec<(Method, PolicyMetrics)>>;

const EVAL_STREAM: u64 = u64::MAX;

fn run_rep(
    cfg: &SweepConfig,
    rep: usize,
    lambdas: &[SensitivityParam],
    oracles: &[Arc<DgpOracle>],
    unit_oracle: &Arc<DgpOracle>,
    evals: &[OracleEval],
) -> Result<RepOutcome> {
    let rep_seed = mix_seed(cfg.seed, rep as u64);
    let samples = generate(&DgpConfig { n: cfg.n, ..cfg.dgp.clone() }, mix_seed(rep_seed, 0))?;
    let dataset = to_dataset(&samples)?;
    let learn_seed = mix_seed(rep_seed, 1);
    let xs: Vec<Vec<f64>> = dataset.rows().iter().map(|r| r.x.clone()).collect();

    let fit = |lambda: SensitivityParam, oracle: &Arc<DgpOracle>, criteria: &[Criterion]| -> Result<Vec<_>> {
        let handle: Arc<dyn NuisanceOracle> = oracle.clone();
        let model = fit_crossfit_with(&dataset, &cfg.nuisance_spec(lambda), learn_seed, Some(handle))?;
        let table = build_score_table(&dataset, &model, criteria.contains(&Criterion::Mmi))?;
        criteria.iter().map(|&c| learn_from_scores(&table, &xs, &cfg.class, c, learn_seed)).collect()
    };

    let aw_probs = if cfg.methods.contains(&Method::Aw) {
        let o = fit(SensitivityParam::one(), unit_oracle, &[Criterion::Mmw])?.remove(0);
        Some(evals[0].treat_probabilities(&o.policy)?)
    } else {
        None
    };
    let mut criteria = Vec::new();
    for (m, c) in [(Method::Mmw, Criterion::Mmw), (Method::Mmi, Criterion::Mmi)] {
        if cfg.methods.contains(&m) {
            criteria.push((m, c));
        }
    }
    let crit_only: Vec<Criterion> = criteria.iter().map(|p| p.1).collect();

    let mut out = Vec::with_capacity(lambdas.len());
    for (li, &lambda) in lambdas.iter().enumerate() {
        let mut row = Vec::new();
        if let Some(p) = &aw_probs {
            row.push((Method::Aw, evals[li].metrics(p)?));
        }
        if !crit_only.is_empty() {
            let outcomes = fit(lambda, &oracles[li], &crit_only)?;
            for ((m, _), o) in criteria.iter().zip(outcomes) {
                let probs = evals[li].treat_probabilities(&o.policy)?;
                row.push((*m, evals[li].metrics(&probs)?));
            }
        }
        row.sort_by_key(|p| p.0);
        out.push(row);
    }
    Ok(out)
}

/// Runs every repetition and grid point; output order is `(grid point,
/// repetition, method)` regardless of thread count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let lambdas = cfg.log_lambda_grid.iter().map(|&l| SensitivityParam::from_log(l)).collect::<Result<Vec<_>>>()?;
    let oracles =
        lambdas.iter().map(|&l| DgpOracle::new(&cfg.dgp, l).map(Arc::new)).collect::<Result<Vec<_>>>()?;
    let unit_oracle = Arc::new(DgpOracle::new(&cfg.dgp, SensitivityParam::one())?);
    let eval_samples = generate(&DgpConfig { n: cfg.eval_n, ..cfg.dgp.clone() }, mix_seed(cfg.seed, EVAL_STREAM))?;
    let evals =
        oracles.par_iter().map(|o| OracleEval::new(o, &eval_samples)).collect::<Result<Vec<_>>>()?;

    let reps: Vec<RepOutcome> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| run_rep(cfg, r, &lambdas, &oracles, &unit_oracle, &evals))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    // Best-in-class values per grid point. For the logistic class the
    // optimum is bounded below by a dedicated search and by every learned
    // policy (all of which belong to the class).
    let lower_bound = matches!(cfg.class, PolicyClass::Logistic { .. });
    let sups: Vec<(f64, f64)> = evals
        .par_iter()
        .enumerate()
        .map(|(li, eval)| -> Result<(f64, f64)> {
            let (mut w, mut d) = match &cfg.class {
                PolicyClass::Logistic { features, .. } => logistic_class_sup(
                    eval,
                    features.as_deref(),
                    &cfg.regret_ascent,
                    cfg.regret_fit_n,
                    mix_seed(cfg.seed, EVAL_STREAM - 1 - li as u64),
                )?,
                class => class_sup(class, eval)?,
            };
            for rep in &reps {
                for (_, m) in &rep[li] {
                    w = w.max(m.worst_welfare);
                    d = d.max(m.worst_improvement);
                }
            }
            Ok((w, d))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (li, &log_lambda) in cfg.log_lambda_grid.iter().enumerate() {
        for (rep, outcome) in reps.iter().enumerate() {
            for &(method, m) in &outcome[li] {
                rows.push(SweepRow {
                    log_lambda,
                    rep,
                    method,
                    treated_frac: m.treated_frac,
                    exp_welfare: m.exp_welfare,
                    worst_welfare: m.worst_welfare,
                    worst_improvement: m.worst_improvement,
                    crw_regret: (sups[li].0 - m.worst_welfare).max(0.0),
                    cri_regret: (sups[li].1 - m.worst_improvement).max(0.0),
                });
            }
        }
    }
    Ok(SweepResult { rows, regret_lower_bound: lower_bound })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SweepConfig {
        SweepConfig {
            log_lambda_grid: vec![0.0],
            reps: 1,
            n: 300,
            eval_n: 2000,
            seed: 5,
            class: PolicyClass::Logistic {
                features: Some(vec![0, 1]),
                ascent: AscentOptions { restarts: 2, max_iter: 100, ..Default::default() },
            },
            regret_fit_n: 1000,
            regret_ascent: AscentOptions { restarts: 1, max_iter: 50, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn unit_lambda_methods_coincide() {
        let r = run_sweep(&tiny()).unwrap();
        assert_eq!(r.rows.len(), 3);
        let aw = &r.rows[0];
        assert_eq!(aw.method, Method::Aw);
        for row in &r.rows[1..] {
            assert_eq!(row.worst_welfare, aw.worst_welfare, "{}", row.method);
            assert_eq!(row.treated_frac, aw.treated_frac);
        }
        assert!(r.regret_lower_bound);
        assert!(r.rows.iter().all(|row| row.crw_regret >= 0.0 && row.cri_regret >= 0.0));
    }

    #[test]
    fn deterministic_and_csv_shape() {
        let cfg = SweepConfig { log_lambda_grid: vec![0.5, 1.5], reps: 2, ..tiny() };
        let a = run_sweep(&cfg).unwrap();
        assert_eq!(a, run_sweep(&cfg).unwrap());
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 2 * 3);
        assert!(text.starts_with(SweepRow::HEADER));
        let s = summarize(&a.rows);
        assert_eq!(s.len(), 6);
        assert_eq!(s[0].log_lambda, 0.5);
        assert_eq!(s[0].reps, 2);
    }

    #[test]
    fn quadrant_class_regrets_are_exact() {
        let cfg = SweepConfig { class: PolicyClass::Quadrant { i: 0, j: 1 }, log_lambda_grid: vec![1.0], ..tiny() };
        let r = run_sweep(&cfg).unwrap();
        assert!(!r.regret_lower_bound);
        assert!(r.rows.iter().all(|row| row.crw_regret >= 0.0));
    }

    #[test]
    fn band_arithmetic() {
        let b = Band::from_values(&[1.0, 3.0]);
        assert_eq!(b.mean, 2.0);
        assert!((b.sd - 2f64.sqrt()).abs() < 1e-15);
        assert!((b.hi - (2.0 + 1.96 * 2f64.sqrt())).abs() < 1e-15);
    }
}
