//! Numerical self-checks of the bound formulas and scores against
//! independent computations: the weight linear program, the unconfounded
//! special case, exact moment identities and Gateaux derivative probes.
//!
//! Every check records the measured deviation next to its tolerance, and
//! the report serializes to JSON.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{sharp_bound_finite, BoundSide, Direction, FiniteConditionalLaw, SignConvention};
use crate::data::SensitivityParam;
use crate::error::Result;
use crate::folds::{mix_seed, rng_from_seed, Rng as ChaRng};
use crate::nuisance::{LearnerKind, NuisanceOracle, NuisanceSpec};
use crate::policy::{learn_from_scores, Criterion, PolicyClass};
use crate::scores::{estimate_w, phi_minus, phi_minus_plug_in, phi_plus, Estimate};
use crate::simlab::{generate, quadrature, to_dataset, DgpConfig, DgpOracle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// Passes when `measured <= tolerance`.
    fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self { name: name.into(), measured, tolerance, passed: measured <= tolerance, note: None }
    }

    /// Passes when `measured >= tolerance`.
    fn at_least(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self { name: name.into(), measured, tolerance, passed: measured >= tolerance, note: None }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub passed: bool,
    pub seconds: f64,
    pub checks: Vec<Check>,
}

impl Suite {
    fn new(name: &str, start: Instant, checks: Vec<Check>) -> Self {
        Self {
            name: name.into(),
            passed: checks.iter().all(|c| c.passed),
            seconds: start.elapsed().as_secs_f64(),
            checks,
        }
    }

    pub fn failing(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfcheckReport {
    pub passed: bool,
    pub suites: Vec<Suite>,
}

impl SelfcheckReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `suite/check` names of every failing check.
    pub fn failures(&self) -> Vec<String> {
        self.suites
            .iter()
            .flat_map(|s| s.failing().map(move |c| format!("{}/{}", s.name, c.name)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfcheckOptions {
    pub seed: u64,
    /// Sign convention used by the closed-form bound; `Flipped` is a
    /// deliberate mutation that the LP comparison must catch.
    pub convention: SignConvention,
    /// Sample size of the simulated moment check.
    pub moment_n: usize,
    /// Gauss–Hermite nodes per dimension.
    pub quadrature_nodes: usize,
}

impl Default for SelfcheckOptions {
    fn default() -> Self {
        Self { seed: 0, convention: SignConvention::Standard, moment_n: 100_000, quadrature_nodes: 64 }
    }
}

pub const LAMBDAS: [f64; 4] = [1.0, 1.5, 2.0, 4.482];
pub const LP_TOLERANCE: f64 = 2e-3;
pub const EXACT_TOLERANCE: f64 = 1e-12;

pub fn run_selfcheck(opts: &SelfcheckOptions) -> Result<SelfcheckReport> {
    let suites = vec![lp_suite(opts)?, unit_lambda_suite(opts)?, moment_suite(opts)?, orthogonality_suite(opts)?];
    Ok(SelfcheckReport { passed: suites.iter().all(|s| s.passed), suites })
}

// ---------------------------------------------------------------------------
// Closed form vs linear program

#[derive(Debug, Clone, Copy)]
enum Component {
    Normal(f64, f64),
    Uniform(f64, f64),
}

impl Component {
    fn cdf(&self, y: f64) -> f64 {
        match *self {
            Component::Normal(mu, sd) => crate::simlab::norm_cdf((y - mu) / sd),
            Component::Uniform(a, b) => ((y - a) / (b - a)).clamp(0.0, 1.0),
        }
    }
    fn range(&self) -> (f64, f64) {
        match *self {
            Component::Normal(mu, sd) => (mu - 12.0 * sd, mu + 12.0 * sd),
            Component::Uniform(a, b) => (a, b),
        }
    }
}

/// Mixture of normals and uniforms with an invertible CDF.
#[derive(Debug, Clone)]
struct ContinuousLaw {
    parts: Vec<(f64, Component)>,
    label: &'static str,
}

impl ContinuousLaw {
    fn cdf(&self, y: f64) -> f64 {
        self.parts.iter().map(|(w, c)| w * c.cdf(y)).sum()
    }

    fn inverse(&self, level: f64) -> f64 {
        let (mut lo, mut hi) = self
            .parts
            .iter()
            .map(|(_, c)| c.range())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (l, h)| (a.min(l), b.max(h)));
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Equal-mass atoms at the midpoint levels `(j + 1/2)/atoms`.
    fn discretize(&self, atoms: usize) -> Vec<f64> {
        (0..atoms).map(|j| self.inverse((j as f64 + 0.5) / atoms as f64)).collect()
    }

    fn random(kind: usize, rng: &mut ChaRng) -> Self {
        let normal = |rng: &mut ChaRng| Component::Normal(rng.random_range(-1.0..1.0), rng.random_range(0.5..1.5));
        let uniform = |rng: &mut ChaRng| {
            let a = rng.random_range(-1.5..0.5);
            Component::Uniform(a, a + rng.random_range(0.5..2.5))
        };
        match kind % 4 {
            0 => Self { parts: vec![(1.0, normal(rng))], label: "normal" },
            1 => Self { parts: vec![(1.0, uniform(rng))], label: "uniform" },
            2 => {
                let w = rng.random_range(0.2..0.8);
                Self { parts: vec![(w, normal(rng)), (1.0 - w, normal(rng))], label: "normal mixture" }
            }
            _ => {
                let w = rng.random_range(0.2..0.8);
                Self { parts: vec![(w, normal(rng)), (1.0 - w, uniform(rng))], label: "normal-uniform mixture" }
            }
        }
    }
}

/// Largest gap between the closed-form average and the LP optimum over
/// both sides for one discretized law.
fn lp_gap(law: &FiniteConditionalLaw, lambda: SensitivityParam, convention: SignConvention) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (side, dir) in [(BoundSide::Lower, Direction::Min), (BoundSide::Upper, Direction::Max)] {
        let q = law.quantile(side.level(lambda));
        let closed = law.closed_form_bound_with(lambda, side, q, convention);
        let lp = sharp_bound_finite(law, lambda, dir)?.value;
        worst = worst.max((closed - lp).abs());
    }
    Ok(worst)
}

pub fn lp_suite(opts: &SelfcheckOptions) -> Result<Suite> {
    let start = Instant::now();
    let mut rng = rng_from_seed(mix_seed(opts.seed, 1));
    let laws: Vec<(ContinuousLaw, f64)> =
        (0..20).map(|k| (ContinuousLaw::random(k, &mut rng), rng.random_range(0.25..0.75))).collect();
    let discretized = laws
        .par_iter()
        .map(|(law, e)| FiniteConditionalLaw::uniform_atoms(1, *e, &law.discretize(2000)))
        .collect::<Result<Vec<_>>>()?;
    let mut checks = Vec::new();
    for &l in &LAMBDAS {
        let lambda = SensitivityParam::new(l)?;
        let mut worst: f64 = 0.0;
        let mut worst_label = "";
        for (law, (c, _)) in discretized.iter().zip(&laws) {
            let g = lp_gap(law, lambda, opts.convention)?;
            if g > worst {
                worst = g;
                worst_label = c.label;
            }
        }
        checks.push(
            Check::at_most(format!("closed form vs LP, 20 laws, lambda={l}"), worst, LP_TOLERANCE)
                .with_note(format!("largest gap on a {worst_label} law")),
        );
    }
    // Uniform[0,1], e = 0.5, lambda = 2: bounds 5/12 and 7/12.
    let grid: Vec<f64> = (0..2000).map(|j| (j as f64 + 0.5) / 2000.0).collect();
    let uni = FiniteConditionalLaw::uniform_atoms(1, 0.5, &grid)?;
    let lambda = SensitivityParam::new(2.0)?;
    for (side, want, label) in [(BoundSide::Upper, 7.0 / 12.0, "upper"), (BoundSide::Lower, 5.0 / 12.0, "lower")] {
        let q = uni.quantile(side.level(lambda));
        let closed = uni.closed_form_bound_with(lambda, side, q, opts.convention);
        checks.push(Check::at_most(format!("uniform anchor {label} closed form"), (closed - want).abs(), LP_TOLERANCE));
    }
    let dir = sharp_bound_finite(&uni, lambda, Direction::Max)?.value;
    checks.push(Check::at_most("uniform anchor upper LP", (dir - 7.0 / 12.0).abs(), LP_TOLERANCE));
    Ok(Suite::new("closed_form_vs_lp", start, checks))
}

// ---------------------------------------------------------------------------
// Unconfounded special case

fn random_discrete_law(arm: usize, rng: &mut ChaRng, atoms: usize) -> Result<FiniteConditionalLaw> {
    let ps: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = ps.iter().sum();
    let mut support: Vec<(f64, f64)> =
        ps.iter().map(|p| (f64::from(rng.random_range(-40i32..40)) / 8.0, p / total)).collect();
    let s: f64 = support.iter().map(|a| a.1).sum();
    support[0].1 += 1.0 - s;
    FiniteConditionalLaw::new(arm, rng.random_range(0.15..0.85), support)
}

pub fn unit_lambda_suite(opts: &SelfcheckOptions) -> Result<Suite> {
    let start = Instant::now();
    let one = SensitivityParam::one();
    let mut rng = rng_from_seed(mix_seed(opts.seed, 2));

    let mut bound_gap: f64 = 0.0;
    for _ in 0..50 {
        let law = random_discrete_law(1, &mut rng, 8)?;
        let lo = sharp_bound_finite(&law, one, Direction::Min)?.value;
        let hi = sharp_bound_finite(&law, one, Direction::Max)?.value;
        let closed_lo = law.closed_form_bound(one, BoundSide::Lower, law.quantile(0.5));
        let closed_hi = law.closed_form_bound(one, BoundSide::Upper, law.quantile(0.5));
        for v in [hi - lo, closed_lo - law.mean(), closed_hi - law.mean(), lo - law.mean()] {
            bound_gap = bound_gap.max(v.abs());
        }
    }

    let mut score_gap: f64 = 0.0;
    for _ in 0..1000 {
        let y = rng.random_range(-5.0..5.0);
        let a = rng.random_range(0..2usize);
        let t = rng.random_range(0..2usize);
        let e = rng.random_range(0.05..0.95);
        let q = rng.random_range(-5.0..5.0);
        let (rb, ra) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let d = f64::from(u8::from(a == t));
        let aipw = y * d / e - (rb + ra) * (d - e) / e;
        let lo = phi_minus(y, a, t, e, q, rb, ra, one)?;
        let hi = phi_plus(y, a, t, e, q, rb, ra, one)?;
        score_gap = score_gap.max((lo - aipw).abs()).max((hi - aipw).abs());
    }

    // MMW and MMI learned on shared unit-lambda scores reach the same value.
    let cfg = DgpConfig { n: 1000, ..Default::default() };
    let samples = generate(&cfg, mix_seed(opts.seed, 3))?;
    let dataset = to_dataset(&samples)?;
    let oracle: std::sync::Arc<dyn NuisanceOracle> = std::sync::Arc::new(DgpOracle::new(&cfg, one)?);
    let spec = NuisanceSpec { learner: LearnerKind::Oracle, lambda: one, ..Default::default() };
    let model = crate::nuisance::fit_crossfit_with(&dataset, &spec, opts.seed, Some(oracle))?;
    let table = crate::scores::build_score_table(&dataset, &model, true)?;
    let xs: Vec<Vec<f64>> = dataset.rows().iter().map(|r| r.x.clone()).collect();
    let class = PolicyClass::Quadrant { i: 0, j: 1 };
    let value = |c: Criterion| -> Result<f64> {
        let o = learn_from_scores(&table, &xs, &class, c, opts.seed)?;
        let probs = o.policy.assign_all(xs.iter().map(Vec::as_slice))?;
        Ok(estimate_w(&table, &probs)?.value)
    };
    let learned_gap = (value(Criterion::Mmw)? - value(Criterion::Mmi)?).abs();

    let checks = vec![
        Check::at_most("upper equals lower bound", bound_gap, EXACT_TOLERANCE),
        Check::at_most("both scores equal the AIPW score", score_gap, EXACT_TOLERANCE),
        Check::at_most("MMW and MMI reach equal estimated welfare", learned_gap, EXACT_TOLERANCE),
    ];
    Ok(Suite::new("unit_lambda_reduction", start, checks))
}

// ---------------------------------------------------------------------------
// Moment identities

/// Covariate point with a discrete outcome law per arm.
struct Cell {
    prob: f64,
    laws: [FiniteConditionalLaw; 2],
}

/// Exact nuisances of a discrete law at the given side.
fn side_nuisance(law: &FiniteConditionalLaw, lambda: SensitivityParam, side: BoundSide) -> (f64, f64, f64) {
    let q = law.quantile(side.level(lambda));
    (q, law.truncated_below(q), law.truncated_above(q))
}

/// `E[phi_t | X]` under exact nuisances, summing over arms and atoms.
fn exact_score_mean(cell: &Cell, t: usize, lambda: SensitivityParam, side: BoundSide) -> Result<f64> {
    let e1 = cell.laws[1].propensity();
    let p = [1.0 - e1, e1];
    let (q, rb, ra) = side_nuisance(&cell.laws[t], lambda, side);
    let f = if side == BoundSide::Lower { phi_minus } else { phi_plus };
    let mut total = 0.0;
    for a in 0..2 {
        for &(y, w) in cell.laws[a].support() {
            total += p[a] * w * f(y, a, t, p[t], q, rb, ra, lambda)?;
        }
    }
    Ok(total)
}

fn finite_moment_gaps(opts: &SelfcheckOptions) -> Result<(f64, f64)> {
    let mut rng = rng_from_seed(mix_seed(opts.seed, 4));
    let mut w_gap: f64 = 0.0;
    let mut d_gap: f64 = 0.0;
    for _ in 0..20 {
        let probs = [0.2, 0.5, 0.3];
        let cells = probs
            .iter()
            .map(|&prob| -> Result<Cell> {
                let e1 = rng.random_range(0.15..0.85);
                let l1 = random_discrete_law(1, &mut rng, 10)?;
                let l0 = random_discrete_law(0, &mut rng, 10)?;
                Ok(Cell {
                    prob,
                    laws: [
                        FiniteConditionalLaw::new(0, 1.0 - e1, l0.support().to_vec())?,
                        FiniteConditionalLaw::new(1, e1, l1.support().to_vec())?,
                    ],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let pi: Vec<f64> = cells.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        for &l in &LAMBDAS {
            let lambda = SensitivityParam::new(l)?;
            let (mut w_score, mut w_lp, mut d_score, mut d_lp) = (0.0, 0.0, 0.0, 0.0);
            for (cell, &p) in cells.iter().zip(&pi) {
                let lo1 = exact_score_mean(cell, 1, lambda, BoundSide::Lower)?;
                let lo0 = exact_score_mean(cell, 0, lambda, BoundSide::Lower)?;
                let hi0 = exact_score_mean(cell, 0, lambda, BoundSide::Upper)?;
                let lp_lo1 = sharp_bound_finite(&cell.laws[1], lambda, Direction::Min)?.value;
                let lp_lo0 = sharp_bound_finite(&cell.laws[0], lambda, Direction::Min)?.value;
                let lp_hi0 = sharp_bound_finite(&cell.laws[0], lambda, Direction::Max)?.value;
                w_score += cell.prob * (p * lo1 + (1.0 - p) * lo0);
                w_lp += cell.prob * (p * lp_lo1 + (1.0 - p) * lp_lo0);
                d_score += cell.prob * p * (lo1 - hi0);
                d_lp += cell.prob * p * (lp_lo1 - lp_hi0);
            }
            w_gap = w_gap.max((w_score - w_lp).abs());
            d_gap = d_gap.max((d_score - d_lp).abs());
        }
    }
    Ok((w_gap, d_gap))
}

/// Mean of `phi_1^-` (and of `phi_1^- - phi_0^+`) over a simulated sample
/// with exact nuisances.
fn simulated_scores(opts: &SelfcheckOptions, lambda: SensitivityParam) -> Result<(Estimate, Estimate)> {
    let cfg = DgpConfig { n: opts.moment_n, ..Default::default() };
    let oracle = DgpOracle::new(&cfg, lambda)?;
    let samples = generate(&cfg, mix_seed(opts.seed, 5))?;
    let (lo, hi) = (lambda.lower_level(), lambda.upper_level());
    let rows: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|s| -> Result<(f64, f64)> {
            let e = oracle.propensity(&s.x);
            let q1 = oracle.quantile(&s.x, 1, lo);
            let w = phi_minus(
                s.y,
                s.a,
                1,
                e[1],
                q1,
                oracle.truncated_below(&s.x, 1, q1),
                oracle.truncated_above(&s.x, 1, q1),
                lambda,
            )?;
            let q0 = oracle.quantile(&s.x, 0, hi);
            let p0 = phi_plus(
                s.y,
                s.a,
                0,
                e[0],
                q0,
                oracle.truncated_below(&s.x, 0, q0),
                oracle.truncated_above(&s.x, 0, q0),
                lambda,
            )?;
            Ok((w, w - p0))
        })
        .collect::<Result<Vec<_>>>()?;
    let w: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let d: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok((Estimate::from_values(&w), Estimate::from_values(&d)))
}

/// Simulated vs quadrature moment check; returns `(|gap|, se, truth)` for
/// the welfare and improvement criteria of always-treat.
pub fn simulated_moment(opts: &SelfcheckOptions, lambda: SensitivityParam) -> Result<[(f64, f64, f64); 2]> {
    let (w, d) = simulated_scores(opts, lambda)?;
    let oracle = DgpOracle::new(&DgpConfig::default(), lambda)?;
    let w_true = quadrature::worst_welfare(&oracle, opts.quadrature_nodes, |_| 1.0);
    let d_true = quadrature::worst_improvement(&oracle, opts.quadrature_nodes, |_| 1.0);
    Ok([((w.value - w_true).abs(), w.se, w_true), ((d.value - d_true).abs(), d.se, d_true)])
}

pub fn moment_suite(opts: &SelfcheckOptions) -> Result<Suite> {
    let start = Instant::now();
    let (w_gap, d_gap) = finite_moment_gaps(opts)?;
    let mut checks = vec![
        Check::at_most("finite support: welfare score mean equals LP bound", w_gap, EXACT_TOLERANCE),
        Check::at_most("finite support: improvement score mean equals LP bound", d_gap, EXACT_TOLERANCE),
    ];
    let lambda = SensitivityParam::from_log(1.5)?;
    let [(wg, wse, wt), (dg, dse, dt)] = simulated_moment(opts, lambda)?;
    checks.push(
        Check::at_most(format!("simulated welfare mean within 3 SE of quadrature (n={})", opts.moment_n), wg, 3.0 * wse)
            .with_note(format!("truth {wt:.6}, se {wse:.2e}")),
    );
    checks.push(
        Check::at_most(format!("simulated improvement mean within 3 SE of quadrature (n={})", opts.moment_n), dg, 3.0 * dse)
            .with_note(format!("truth {dt:.6}, se {dse:.2e}")),
    );
    Ok(Suite::new("moment_identity", start, checks))
}

// ---------------------------------------------------------------------------
// Orthogonality probes

/// Covariate point with `Y | X, A=a ~ Uniform[lo_a, hi_a]`.
#[derive(Debug, Clone, Copy)]
struct UniformCell {
    prob: f64,
    e1: f64,
    range: [(f64, f64); 2],
}

impl UniformCell {
    fn e(&self, a: usize) -> f64 {
        if a == 1 {
            self.e1
        } else {
            1.0 - self.e1
        }
    }

    /// Exact `(q, rho_below, rho_above)` for arm `a` at quantile `level`.
    fn nuisance(&self, a: usize, level: f64) -> [f64; 3] {
        let (l, h) = self.range[a];
        let q = l + level * (h - l);
        [q, (q * q - l * l) / (2.0 * (h - l)), (h * h - q * q) / (2.0 * (h - l))]
    }

    /// `E[f(Y) | A=a]`, splitting at `q` so each piece is integrated
    /// exactly by three-point Gauss–Legendre.
    fn expect(&self, a: usize, q: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
        const NODES: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];
        let (l, h) = self.range[a];
        let mut cuts = vec![l];
        if q > l && q < h {
            cuts.push(q);
        }
        cuts.push(h);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (c, r) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            for (t, wt) in NODES {
                total += wt * r * f(c + r * t)?;
            }
        }
        Ok(total / (h - l))
    }
}

/// Nuisance values fed to a score for one arm: `[e_t, q, rho_below, rho_above]`.
type ArmInputs = [f64; 4];

/// `E[score_t]` over `(A, Y) | X` with the given inputs.
fn score_mean(
    cell: &UniformCell,
    t: usize,
    inputs: ArmInputs,
    score: &dyn Fn(f64, usize, usize, ArmInputs) -> Result<f64>,
) -> Result<f64> {
    let mut total = 0.0;
    for a in 0..2 {
        let q = inputs[1];
        total += cell.e(a) * cell.expect(a, q, |y| score(y, a, t, inputs))?;
    }
    Ok(total)
}

/// Least-squares slope of `log dev` on `log step`; `None` when every
/// deviation is at rounding level (the first-order and second-order terms
/// both vanish identically).
fn log_log_slope(steps: &[f64], devs: &[f64]) -> Option<f64> {
    if devs.iter().all(|d| *d < 1e-13) {
        return None;
    }
    let xs: Vec<f64> = steps.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = devs.iter().map(|d| d.max(1e-300).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub const PROBE_STEPS: [f64; 4] = [0.08, 0.04, 0.02, 0.01];

/// Which nuisance a probe perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Propensity,
    Quantile,
    RhoBelow,
    RhoAbove,
    /// Propensity and both truncated means together.
    Joint,
}

/// Perturbed `[e, q, rho_below, rho_above]` for one arm.
fn perturb(base: ArmInputs, target: Target, step: f64, direction: f64, scale: f64) -> ArmInputs {
    let mut v = base;
    match target {
        Target::Propensity => v[0] += step * direction * 0.5,
        Target::Quantile => v[1] += step * direction * scale,
        Target::RhoBelow => v[2] += step * direction * scale,
        Target::RhoAbove => v[3] += step * direction * scale,
        Target::Joint => {
            v[0] += step * direction * 0.5;
            v[2] += step * direction * scale;
            v[3] -= step * direction * scale;
        }
    }
    v
}

fn probe_cells() -> Vec<UniformCell> {
    vec![
        UniformCell { prob: 0.3, e1: 0.35, range: [(-1.0, 2.0), (0.0, 3.0)] },
        UniformCell { prob: 0.45, e1: 0.6, range: [(-2.0, 1.0), (-0.5, 1.5)] },
        UniformCell { prob: 0.25, e1: 0.5, range: [(0.5, 4.0), (1.0, 2.0)] },
    ]
}

/// Per-cell probe directions.
const DIRECTIONS: [f64; 3] = [0.6, -0.9, 0.75];

/// Deviations of a criterion under perturbation of one nuisance of one arm.
fn probe(
    criterion: &dyn Fn(&UniformCell, [ArmInputs; 2]) -> Result<f64>,
    exact: &dyn Fn(&UniformCell) -> [ArmInputs; 2],
    arm: usize,
    target: Target,
) -> Result<Vec<f64>> {
    let cells = probe_cells();
    let truth: f64 = cells.iter().map(|c| Ok(c.prob * criterion(c, exact(c))?)).sum::<Result<f64>>()?;
    PROBE_STEPS
        .iter()
        .map(|&s| {
            let mut v = 0.0;
            for (c, dir) in cells.iter().zip(DIRECTIONS) {
                let mut inputs = exact(c);
                let scale = c.range[arm].1 - c.range[arm].0;
                inputs[arm] = perturb(inputs[arm], target, s, dir, scale);
                if matches!(target, Target::Propensity | Target::Joint) {
                    // keep the two arm propensities on the simplex
                    inputs[1 - arm][0] = 1.0 - inputs[arm][0];
                }
                v += c.prob * criterion(c, inputs)?;
            }
            Ok((v - truth).abs())
        })
        .collect()
}

fn orthogonal_check(name: String, devs: &[f64]) -> Check {
    match log_log_slope(&PROBE_STEPS, devs) {
        Some(s) => Check::at_least(name, s, 1.9),
        None => Check::at_least(name, f64::INFINITY, 1.9)
            .with_note(format!("deviation identically zero (max {:.1e})", devs.iter().cloned().fold(0.0, f64::max))),
    }
}

/// Options are accepted for a uniform suite signature; the probes are exact.
pub fn orthogonality_suite(_opts: &SelfcheckOptions) -> Result<Suite> {
    let start = Instant::now();
    let lambda = SensitivityParam::new(2.0)?;
    let (lo, hi) = (lambda.lower_level(), lambda.upper_level());
    let minus = |y: f64, a: usize, t: usize, v: ArmInputs| phi_minus(y, a, t, v[0], v[1], v[2], v[3], lambda);
    let plus = |y: f64, a: usize, t: usize, v: ArmInputs| phi_plus(y, a, t, v[0], v[1], v[2], v[3], lambda);
    let plug = |y: f64, a: usize, t: usize, v: ArmInputs| phi_minus_plug_in(y, a, t, v[0], v[1], lambda);

    let exact_lower = |c: &UniformCell| -> [ArmInputs; 2] {
        [0, 1].map(|a| {
            let [q, rb, ra] = c.nuisance(a, lo);
            [c.e(a), q, rb, ra]
        })
    };
    // arm 1 at the lower level, arm 0 at the upper level
    let exact_delta = |c: &UniformCell| -> [ArmInputs; 2] {
        let [q0, rb0, ra0] = c.nuisance(0, hi);
        let [q1, rb1, ra1] = c.nuisance(1, lo);
        [[c.e(0), q0, rb0, ra0], [c.e(1), q1, rb1, ra1]]
    };
    // psi_W of always-treat, psi_Delta of always-treat, plug-in of always-treat
    let welfare = |c: &UniformCell, v: [ArmInputs; 2]| score_mean(c, 1, v[1], &minus);
    let improvement =
        |c: &UniformCell, v: [ArmInputs; 2]| Ok(score_mean(c, 1, v[1], &minus)? - score_mean(c, 0, v[0], &plus)?);
    let plug_in = |c: &UniformCell, v: [ArmInputs; 2]| score_mean(c, 1, v[1], &plug);

    let mut checks = Vec::new();
    for (target, label) in [
        (Target::Propensity, "e"),
        (Target::Quantile, "q-"),
        (Target::RhoBelow, "rho-_1"),
        (Target::RhoAbove, "rho-_0"),
        (Target::Joint, "e and rho- jointly"),
    ] {
        let devs = probe(&welfare, &exact_lower, 1, target)?;
        checks.push(orthogonal_check(format!("welfare score slope, perturb {label}"), &devs));
    }
    for (arm, target, label) in [
        (1, Target::Propensity, "e"),
        (1, Target::Quantile, "q-"),
        (1, Target::RhoBelow, "rho-_1"),
        (1, Target::RhoAbove, "rho-_0"),
        (0, Target::Quantile, "q+"),
        (0, Target::RhoBelow, "rho+_1"),
        (0, Target::RhoAbove, "rho+_0"),
        (1, Target::Joint, "e and rho- jointly"),
    ] {
        let devs = probe(&improvement, &exact_delta, arm, target)?;
        checks.push(orthogonal_check(format!("improvement score slope, perturb {label}"), &devs));
    }
    for (target, label) in [(Target::Propensity, "e"), (Target::Quantile, "q-")] {
        let devs = probe(&plug_in, &exact_lower, 1, target)?;
        let slope = log_log_slope(&PROBE_STEPS, &devs).unwrap_or(f64::INFINITY);
        checks.push(Check::at_most(format!("plug-in score slope, perturb {label}"), slope, 1.2));
    }
    Ok(Suite::new("orthogonality", start, checks))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> SelfcheckOptions {
        SelfcheckOptions { moment_n: 20_000, quadrature_nodes: 64, ..Default::default() }
    }

    #[test]
    fn all_suites_pass() {
        let r = run_selfcheck(&quick()).unwrap();
        assert!(r.passed, "{:?}", r.failures());
        assert!(r.suites.len() >= 4);
        let json = r.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["suites"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn flipped_sign_is_caught() {
        let opts = SelfcheckOptions { convention: SignConvention::Flipped, ..quick() };
        let s = lp_suite(&opts).unwrap();
        assert!(!s.passed);
        // the unit-lambda row is unaffected by the sign
        assert!(s.checks[0].passed);
        assert!(!s.checks[1].passed);
    }

    #[test]
    fn slope_of_power_law() {
        let devs: Vec<f64> = PROBE_STEPS.iter().map(|s| 3.0 * s * s).collect();
        assert!((log_log_slope(&PROBE_STEPS, &devs).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(log_log_slope(&PROBE_STEPS, &[0.0; 4]), None);
    }

    #[test]
    fn uniform_cell_nuisances_match_quadrature() {
        let c = probe_cells()[0];
        let [q, rb, ra] = c.nuisance(1, 0.3);
        let below = c.expect(1, q, |y| Ok(if y < q { y } else { 0.0 })).unwrap();
        let above = c.expect(1, q, |y| Ok(if y > q { y } else { 0.0 })).unwrap();
        assert!((below - rb).abs() < 1e-14);
        assert!((above - ra).abs() < 1e-14);
    }
}
