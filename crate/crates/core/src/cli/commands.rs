//! Subcommand bodies. Each returns the files it wants written; nothing
//! touches disk until the whole computation has succeeded.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{BoundsConfig, Design, EvaluateConfig, FitConfig, NuisanceConfig, SimulateConfig};
use crate::data::{fmt_f64, Dataset, SensitivityParam};
use crate::error::{Error, Result};
use crate::folds::mix_seed;
use crate::nuisance::{fit_crossfit_with, NuisanceModel, NuisanceOracle};
use crate::policy::learn::check_class;
use crate::policy::{learn_from_scores, Criterion, Policy, PolicyClass};
use crate::scores::{build_score_table, estimate_delta, estimate_delta_vs_baseline, estimate_w, Estimate};
use crate::selfcheck::{run_selfcheck, SelfcheckOptions};
use crate::simlab::standin::{preschool_standin, training_standin};
use crate::simlab::{
    evaluate_policy, generate, run_sweep, summarize, to_dataset, DgpConfig, DgpOracle, OracleEval, PolicyMetrics,
    SweepConfig,
};
use crate::svg::{line_chart, CHARTS};

/// Files to write (relative to the output directory), a human summary for
/// stdout and the process exit code.
#[derive(Debug, Default)]
pub struct Output {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: String,
    pub exit_code: i32,
}

impl Output {
    fn push(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn push_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.push(name, text.into_bytes());
        Ok(())
    }
}

const DEFAULT_STANDIN_N: usize = 2000;

pub fn simulate(cfg: &SimulateConfig, with_truth: bool) -> Result<Output> {
    let mut out = Output::default();
    let dataset = match cfg.design {
        Design::Dgp => {
            let dgp = DgpConfig { n: cfg.n.unwrap_or(cfg.dgp.n), ..cfg.dgp.clone() };
            let samples = generate(&dgp, cfg.seed)?;
            if with_truth {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["y0", "y1", "u"]).map_err(csv_err)?;
                for s in &samples {
                    w.write_record([fmt_f64(s.y0), fmt_f64(s.y1), s.u.to_string()]).map_err(csv_err)?;
                }
                out.push("truth.csv", w.into_inner().map_err(|e| Error::Csv(e.to_string()))?);
            }
            to_dataset(&samples)?
        }
        Design::Training | Design::Preschool if with_truth => {
            return Err(Error::BadConfig("--with-truth is available for the `dgp` design only".into()));
        }
        Design::Training => training_standin(cfg.n.unwrap_or(DEFAULT_STANDIN_N), cfg.seed)?,
        Design::Preschool => preschool_standin(cfg.n.unwrap_or(DEFAULT_STANDIN_N), cfg.seed)?,
    };
    let mut buf = Vec::new();
    dataset.write_csv(&mut buf)?;
    out.files.insert(0, ("data.csv".into(), buf));
    out.summary = format!("simulated {} rows, m = {}, d = {}", dataset.n(), dataset.m(), dataset.d());
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

/// Reads the dataset and charges `cost` to every unit off arm 0.
fn load(path: &Path, m: usize, cost: f64) -> Result<Dataset> {
    let mut data = Dataset::read_csv(path, m)?;
    if cost != 0.0 {
        for arm in 1..m {
            data = data.with_arm_cost(arm, cost);
        }
    }
    Ok(data)
}

fn oracle_for(
    nuisance: &NuisanceConfig,
    dgp: Option<&DgpConfig>,
    data: &Dataset,
    lambda: SensitivityParam,
) -> Result<Option<Arc<dyn NuisanceOracle>>> {
    nuisance.check_oracle(dgp)?;
    let Some(dgp) = dgp else { return Ok(None) };
    if data.m() != 2 || data.d() != 2 {
        return Err(Error::BadConfig(format!(
            "the simulation design has m = 2, d = 2; data have m = {}, d = {}",
            data.m(),
            data.d()
        )));
    }
    Ok(Some(Arc::new(DgpOracle::new(dgp, lambda)?)))
}

fn covariates(data: &Dataset) -> Vec<Vec<f64>> {
    data.rows().iter().map(|r| r.x.clone()).collect()
}

fn arm_shares(probs: &[Vec<f64>], m: usize) -> Vec<f64> {
    let n = probs.len() as f64;
    (0..m).map(|t| probs.iter().map(|p| p[t]).sum::<f64>() / n).collect()
}

#[derive(Debug, Serialize)]
struct Range {
    min: f64,
    mean: f64,
    max: f64,
}

impl Range {
    fn of(v: impl Iterator<Item = f64> + Clone) -> Self {
        let n = v.clone().count() as f64;
        Self {
            min: v.clone().fold(f64::INFINITY, f64::min),
            mean: v.clone().sum::<f64>() / n,
            max: v.fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Serialize)]
struct NuisanceDiagnostics {
    learner: crate::nuisance::LearnerKind,
    k: usize,
    clip_kappa: f64,
    /// Served (clipped) propensity per arm.
    propensity: Vec<Range>,
    /// Units whose propensity vector touched the clipping floor.
    units_at_clip_floor: usize,
    /// Width of the plug-in interval for `E[Y(t) | x]` per arm.
    bound_width: Vec<Range>,
}

fn diagnostics(model: &NuisanceModel, data: &Dataset, cfg: &NuisanceConfig) -> NuisanceDiagnostics {
    let lambda = model.lambda();
    let served: Vec<_> = data.rows().par_iter().enumerate().map(|(i, r)| model.predict_unit(i, &r.x)).collect();
    let bounds: Vec<_> = served.iter().map(|p| p.mu_bounds(lambda)).collect();
    let m = data.m();
    let floor = cfg.clip_kappa * (1.0 + 1e-9);
    NuisanceDiagnostics {
        learner: cfg.learner,
        k: cfg.k,
        clip_kappa: cfg.clip_kappa,
        propensity: (0..m).map(|t| Range::of(served.iter().map(move |p| p.propensity[t]))).collect(),
        units_at_clip_floor: served.iter().filter(|p| p.propensity.iter().any(|&e| e <= floor)).count(),
        bound_width: (0..m).map(|t| Range::of(bounds.iter().map(move |b| b[t].1 - b[t].0))).collect(),
    }
}

#[derive(Debug, Serialize)]
struct FitReport {
    method: Criterion,
    /// What `estimate` measures.
    criterion: &'static str,
    log_lambda: f64,
    lambda: f64,
    /// At `lambda = 1` both criteria reduce to average welfare.
    reduces_to_aw: bool,
    class: PolicyClass,
    n: usize,
    m: usize,
    treated_cost: f64,
    estimate: Estimate,
    treated_fraction: f64,
    arm_shares: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
    nuisance: NuisanceDiagnostics,
    seed: u64,
    wall_seconds: f64,
}

fn criterion_label(c: Criterion) -> &'static str {
    match c {
        Criterion::Mmw => "worst_case_welfare",
        Criterion::Mmi => "worst_case_improvement",
    }
}

pub fn fit(cfg: &FitConfig) -> Result<Output> {
    let start = Instant::now();
    let lambda = SensitivityParam::from_log(cfg.log_lambda)?;
    check_class(&cfg.class, cfg.m)?;
    if cfg.method == Criterion::Mmi && cfg.m != 2 {
        return Err(Error::NotBinary(cfg.m));
    }
    let data = load(&cfg.data, cfg.m, cfg.treated_cost)?;
    let oracle = oracle_for(&cfg.nuisance, cfg.dgp.as_ref(), &data, lambda)?;
    let need_plus = cfg.method == Criterion::Mmi;
    let model = fit_crossfit_with(&data, &cfg.nuisance.spec(lambda, need_plus), cfg.seed, oracle)?;
    let table = build_score_table(&data, &model, need_plus)?;
    let xs = covariates(&data);
    let outcome = learn_from_scores(&table, &xs, &cfg.class, cfg.method, cfg.seed)?;
    let probs = outcome.policy.assign_all(xs.iter().map(Vec::as_slice))?;

    let report = FitReport {
        method: cfg.method,
        criterion: criterion_label(cfg.method),
        log_lambda: cfg.log_lambda,
        lambda: lambda.value(),
        reduces_to_aw: lambda.value() == 1.0,
        class: cfg.class.clone(),
        n: data.n(),
        m: data.m(),
        treated_cost: cfg.treated_cost,
        estimate: outcome.value,
        treated_fraction: outcome.treated_fraction,
        arm_shares: arm_shares(&probs, data.m()),
        converged: outcome.converged,
        nuisance: diagnostics(&model, &data, &cfg.nuisance),
        seed: cfg.seed,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    let mut out = Output::default();
    let mut policy = outcome.policy.to_json()?;
    policy.push('\n');
    out.push("policy.json", policy.into_bytes());
    out.push_json("fit_report.json", &report)?;
    let mut scores = Vec::new();
    table.write_csv(&mut scores)?;
    out.push("scores.csv", scores);
    out.summary = format!(
        "{} {} policy at log lambda {}: {} = {:.6} (se {:.6}), treated fraction {:.4}{}",
        cfg.method_name(),
        outcome.policy.kind(),
        cfg.log_lambda,
        report.criterion,
        report.estimate.value + 0.0, // prints -0 as 0
        report.estimate.se,
        report.treated_fraction,
        if report.reduces_to_aw { " [reduces to AW]" } else { "" }
    );
    Ok(out)
}

impl FitConfig {
    fn method_name(&self) -> &'static str {
        match self.method {
            Criterion::Mmw => "MMW",
            Criterion::Mmi => "MMI",
        }
    }
}

fn read_policy(path: &Path) -> Result<Policy> {
    Policy::from_json(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    policy_kind: &'static str,
    log_lambda: f64,
    lambda: f64,
    n: usize,
    m: usize,
    treated_cost: f64,
    worst_case_welfare: Estimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_case_improvement: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_case_improvement_vs_baseline: Option<Estimate>,
    treated_fraction: f64,
    arm_shares: Vec<f64>,
    /// Exact metrics under the declared design, on a fresh sample.
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<PolicyMetrics>,
}

pub fn evaluate(cfg: &EvaluateConfig) -> Result<Output> {
    let lambda = SensitivityParam::from_log(cfg.log_lambda)?;
    let policy = read_policy(&cfg.policy)?;
    if policy.m != cfg.m {
        return Err(Error::DimensionMismatch { expected: cfg.m, got: policy.m });
    }
    let baseline = cfg.baseline.as_deref().map(read_policy).transpose()?;
    if baseline.is_some() && cfg.m != 2 {
        return Err(Error::NotBinary(cfg.m));
    }
    let data = load(&cfg.data, cfg.m, cfg.treated_cost)?;
    let oracle = oracle_for(&cfg.nuisance, cfg.dgp.as_ref(), &data, lambda)?;
    let binary = data.m() == 2;
    let model = fit_crossfit_with(&data, &cfg.nuisance.spec(lambda, binary), cfg.seed, oracle)?;
    let table = build_score_table(&data, &model, binary)?;
    let xs = covariates(&data);
    let probs = policy.assign_all(xs.iter().map(Vec::as_slice))?;
    let treat: Vec<f64> = probs.iter().map(|p| p[1]).collect();
    let improvement = if binary { Some(estimate_delta(&table, &treat)?) } else { None };
    let vs_baseline = match &baseline {
        Some(b) => {
            let base: Vec<f64> =
                xs.iter().map(|x| b.treat_probability(x)).collect::<Result<Vec<_>>>()?;
            Some(estimate_delta_vs_baseline(&table, &treat, &base)?)
        }
        None => None,
    };
    let oracle_metrics = match &cfg.dgp {
        Some(dgp) => {
            let o = DgpOracle::new(dgp, lambda)?;
            let fresh = generate(&DgpConfig { n: cfg.oracle_n, ..dgp.clone() }, mix_seed(cfg.seed, u64::MAX))?;
            Some(evaluate_policy(&policy, &OracleEval::new(&o, &fresh)?)?)
        }
        None => None,
    };
    let shares = arm_shares(&probs, data.m());
    let report = EvaluationReport {
        policy_kind: policy.kind(),
        log_lambda: cfg.log_lambda,
        lambda: lambda.value(),
        n: data.n(),
        m: data.m(),
        treated_cost: cfg.treated_cost,
        worst_case_welfare: estimate_w(&table, &probs)?,
        worst_case_improvement: improvement,
        worst_case_improvement_vs_baseline: vs_baseline,
        treated_fraction: 1.0 - shares[0],
        arm_shares: shares,
        oracle: oracle_metrics,
    };
    let mut out = Output::default();
    out.push_json("evaluation.json", &report)?;
    out.summary = format!(
        "worst-case welfare {:.6} (se {:.6}), treated fraction {:.4}",
        report.worst_case_welfare.value, report.worst_case_welfare.se, report.treated_fraction
    );
    Ok(out)
}

/// File name of the bounds table for one grid value.
pub fn bounds_file_name(log_lambda: f64) -> String {
    format!("bounds_log_lambda_{log_lambda}.csv")
}

pub fn bounds(cfg: &BoundsConfig) -> Result<Output> {
    if cfg.log_lambda_grid.is_empty() {
        return Err(Error::BadConfig("log_lambda_grid must be nonempty".into()));
    }
    let lambdas =
        cfg.log_lambda_grid.iter().map(|&l| SensitivityParam::from_log(l)).collect::<Result<Vec<_>>>()?;
    let data = load(&cfg.data, 2, 0.0)?;
    let mut out = Output::default();
    for (&log_lambda, &lambda) in cfg.log_lambda_grid.iter().zip(&lambdas) {
        let oracle = oracle_for(&cfg.nuisance, cfg.dgp.as_ref(), &data, lambda)?;
        let model = fit_crossfit_with(&data, &cfg.nuisance.spec(lambda, true), cfg.seed, oracle)?;
        let rows: Vec<[f64; 6]> = data
            .rows()
            .par_iter()
            .enumerate()
            .map(|(i, r)| {
                let b = model.predict_unit(i, &r.x).mu_bounds(lambda);
                let (lo1, hi1, lo0, hi0) = (b[1].0, b[1].1, b[0].0, b[0].1);
                [lo1, hi1, lo0, hi0, lo1 - hi0, hi1 - lo0]
            })
            .collect();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["unit", "mu_lo_1", "mu_hi_1", "mu_lo_0", "mu_hi_0", "tau_lo", "tau_hi"]).map_err(csv_err)?;
        for (i, row) in rows.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|&v| fmt_f64(v)));
            w.write_record(&rec).map_err(csv_err)?;
        }
        out.push(bounds_file_name(log_lambda), w.into_inner().map_err(|e| Error::Csv(e.to_string()))?);
    }
    out.summary = format!("bounds for {} units at {} sensitivity values", data.n(), lambdas.len());
    Ok(out)
}

pub fn sweep(cfg: &SweepConfig) -> Result<Output> {
    let result = run_sweep(cfg)?;
    let summary = summarize(&result.rows);
    let mut out = Output::default();
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    out.push("sweep.csv", csv);
    out.push_json("summary.json", &summary)?;
    for (metric, title) in CHARTS {
        out.push(format!("{metric}.svg"), line_chart(&summary, metric, title).into_bytes());
    }
    out.summary = format!(
        "{} rows ({} reps x {} grid points x {} methods)",
        result.rows.len(),
        cfg.reps,
        cfg.log_lambda_grid.len(),
        cfg.methods.len()
    );
    Ok(out)
}

pub fn selfcheck(opts: &SelfcheckOptions) -> Result<Output> {
    let report = run_selfcheck(opts)?;
    let mut out = Output::default();
    out.push("selfcheck.json", format!("{}\n", report.to_json()?).into_bytes());
    let mut lines = Vec::new();
    for s in &report.suites {
        lines.push(format!("{} {} ({:.1}s)", if s.passed { "PASS" } else { "FAIL" }, s.name, s.seconds));
    }
    if report.passed {
        lines.push("all checks passed".into());
    } else {
        out.exit_code = 3;
        for f in report.failures() {
            lines.push(format!("failing check: {f}"));
        }
    }
    out.summary = lines.join("\n");
    Ok(out)
}
