//! Cross-fitted nuisance estimation: propensities, level quantiles of the
//! outcome, and truncated means `E[Y 1{Y < q}]`, `E[Y 1{Y > q}]` given
//! covariates and arm.
//!
//! Every predictor serving unit `i` is trained only on units outside the
//! fold of `i`. An `oracle` learner bypasses fitting and serves a
//! registered closed-form [`NuisanceOracle`].

pub mod gbt;
pub mod knn;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SensitivityParam};
use crate::error::{Error, Result};
use crate::folds::{make_folds, FoldAssignment};
use gbt::{Gbt, GbtParams, Loss};
use knn::{Knn, KnnTarget};

/// Learner family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Gbt,
    Knn,
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceSpec {
    pub learner: LearnerKind,
    pub gbt: GbtParams,
    /// `None` means `ceil(n_train^0.6)`.
    pub neighbors: Option<usize>,
    pub clip_kappa: f64,
    pub lambda: SensitivityParam,
    pub k: usize,
    /// Also fit the upper-level quantile and its truncated means.
    pub upper: bool,
}

impl Default for NuisanceSpec {
    fn default() -> Self {
        Self {
            learner: LearnerKind::Gbt,
            gbt: GbtParams::default(),
            neighbors: None,
            clip_kappa: 0.01,
            lambda: SensitivityParam::one(),
            k: 10,
            upper: true,
        }
    }
}

impl NuisanceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_kappa > 0.0 && self.clip_kappa < 0.5) {
            return Err(Error::BadConfig(format!("clip_kappa must lie in (0, 0.5), got {}", self.clip_kappa)));
        }
        let g = &self.gbt;
        if g.trees == 0 || g.depth == 0 || g.min_leaf == 0 || !(g.learning_rate > 0.0) {
            return Err(Error::BadConfig("gbt hyperparameters must be positive".into()));
        }
        if self.neighbors == Some(0) {
            return Err(Error::BadConfig("neighbors must be positive".into()));
        }
        Ok(())
    }
}

/// Closed-form nuisance functions, used for testing and simulation.
pub trait NuisanceOracle: Send + Sync {
    /// Nominal propensities of all arms at `x`.
    fn propensity(&self, x: &[f64]) -> Vec<f64>;
    /// `inf { q : F(q | x, arm) >= level }`.
    fn quantile(&self, x: &[f64], arm: usize, level: f64) -> f64;
    /// `E[Y 1{Y < q} | x, arm]`.
    fn truncated_below(&self, x: &[f64], arm: usize, q: f64) -> f64;
    /// `E[Y 1{Y > q} | x, arm]`.
    fn truncated_above(&self, x: &[f64], arm: usize, q: f64) -> f64;
}

/// Real-valued function of covariates.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &[f64]) -> f64;
}

/// Simplex-valued function of covariates.
pub trait ArmProbabilities: Send + Sync {
    fn predict(&self, x: &[f64]) -> Vec<f64>;
}

impl Predictor for Gbt {
    fn predict(&self, x: &[f64]) -> f64 {
        Gbt::predict(self, x)
    }
}

impl Predictor for Knn {
    fn predict(&self, x: &[f64]) -> f64 {
        Knn::predict(self, x)
    }
}

/// Quantile level, quantile and truncated means for one side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideNuisance {
    pub q: f64,
    /// `E[Y 1{Y < q} | x, arm]`.
    pub rho_below: f64,
    /// `E[Y 1{Y > q} | x, arm]`.
    pub rho_above: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmNuisance {
    pub lower: SideNuisance,
    pub upper: Option<SideNuisance>,
}

/// Everything the scores need at one covariate point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointNuisance {
    pub propensity: Vec<f64>,
    pub arms: Vec<ArmNuisance>,
}

impl PointNuisance {
    /// Plug-in `(lower, upper)` bounds on `E[Y(t) | x]` for every arm at
    /// sensitivity `lambda`. The upper side falls back to the lower-level
    /// fit when no upper fit exists, which is exact only at `lambda = 1`.
    pub fn mu_bounds(&self, lambda: SensitivityParam) -> Vec<(f64, f64)> {
        let l = lambda.value();
        self.propensity
            .iter()
            .zip(&self.arms)
            .map(|(&e, arm)| {
                let lo = &arm.lower;
                let hi = arm.upper.as_ref().unwrap_or(lo);
                let lower = e * (lo.rho_below + lo.rho_above) + (1.0 - e) * (l * lo.rho_below + lo.rho_above / l);
                let upper = e * (hi.rho_below + hi.rho_above) + (1.0 - e) * (hi.rho_below / l + l * hi.rho_above);
                (lower, upper)
            })
            .collect()
    }
}

/// Raises entries below `kappa` to `kappa` and rescales the rest so the
/// vector still sums to one, repeating until no entry is below the floor.
pub fn clip_simplex(p: &[f64], kappa: f64) -> Vec<f64> {
    let m = p.len();
    let mut out: Vec<f64> = p.iter().map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 }).collect();
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        out.iter_mut().for_each(|v| *v /= s);
    } else {
        out.iter_mut().for_each(|v| *v = 1.0 / m as f64);
    }
    let mut fixed = vec![false; m];
    loop {
        let mut changed = false;
        for j in 0..m {
            if !fixed[j] && out[j] < kappa {
                fixed[j] = true;
                changed = true;
            }
        }
        let n_fixed = fixed.iter().filter(|f| **f).count();
        let free_mass = 1.0 - kappa * n_fixed as f64;
        let free_sum: f64 = (0..m).filter(|&j| !fixed[j]).map(|j| out[j]).sum();
        for j in 0..m {
            if fixed[j] {
                out[j] = kappa;
            } else if free_sum > 0.0 {
                out[j] *= free_mass / free_sum;
            }
        }
        if !changed {
            break;
        }
    }
    out
}

struct GbtPropensity {
    models: Vec<Gbt>,
}

impl ArmProbabilities for GbtPropensity {
    fn predict(&self, x: &[f64]) -> Vec<f64> {
        if self.models.len() == 1 {
            let p = self.models[0].predict(x);
            vec![1.0 - p, p]
        } else {
            let raw: Vec<f64> = self.models.iter().map(|m| m.predict(x)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        }
    }
}

struct KnnPropensity {
    model: Knn,
    m: usize,
}

impl ArmProbabilities for KnnPropensity {
    fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.model.predict_frequencies(x, self.m)
    }
}

/// Clips the wrapped predictor's output into `[kappa, 1 - kappa]`.
pub struct ClippedPropensity {
    inner: Box<dyn ArmProbabilities>,
    kappa: f64,
}

impl ArmProbabilities for ClippedPropensity {
    fn predict(&self, x: &[f64]) -> Vec<f64> {
        clip_simplex(&self.inner.predict(x), self.kappa)
    }
}

fn check_arms(train: &Dataset, fold: Option<usize>) -> Result<()> {
    if let Some(arm) = train.arm_counts().iter().position(|&c| c == 0) {
        return Err(Error::DegenerateArm { arm, fold });
    }
    Ok(())
}

fn arm_rows(train: &Dataset, arm: usize, fold: Option<usize>) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let (xs, ys): (Vec<_>, Vec<_>) =
        train.rows().iter().filter(|r| r.a == arm).map(|r| (r.x.clone(), r.y)).unzip();
    if xs.is_empty() {
        return Err(Error::DegenerateArm { arm, fold });
    }
    Ok((xs, ys))
}

/// Clipped arm-probability predictor. Multi-arm GBT uses one-vs-rest
/// logistic models divided by their sum.
pub fn fit_propensity(train: &Dataset, spec: &NuisanceSpec) -> Result<ClippedPropensity> {
    fit_propensity_in(train, spec, None)
}

fn fit_propensity_in(train: &Dataset, spec: &NuisanceSpec, fold: Option<usize>) -> Result<ClippedPropensity> {
    check_arms(train, fold)?;
    let m = train.m();
    let xs: Vec<Vec<f64>> = train.rows().iter().map(|r| r.x.clone()).collect();
    let inner: Box<dyn ArmProbabilities> = match spec.learner {
        LearnerKind::Gbt => {
            let targets: Vec<usize> = if m == 2 { vec![1] } else { (0..m).collect() };
            let models = targets
                .iter()
                .map(|&arm| {
                    let y: Vec<f64> = train.rows().iter().map(|r| f64::from(u8::from(r.a == arm))).collect();
                    Gbt::fit(&xs, &y, Loss::Logistic, &spec.gbt)
                })
                .collect();
            Box::new(GbtPropensity { models })
        }
        LearnerKind::Knn => {
            let labels: Vec<f64> = train.rows().iter().map(|r| r.a as f64).collect();
            Box::new(KnnPropensity { model: Knn::fit(&xs, &labels, spec.neighbors, KnnTarget::Mean), m })
        }
        LearnerKind::Oracle => return Err(Error::MissingNuisance("oracle bundle".into())),
    };
    Ok(ClippedPropensity { inner, kappa: spec.clip_kappa })
}

/// Conditional level quantile of `Y` given `X` within `A = arm`.
pub fn fit_quantile(train: &Dataset, arm: usize, level: f64, spec: &NuisanceSpec) -> Result<Box<dyn Predictor>> {
    fit_quantile_in(train, arm, level, spec, None)
}

fn fit_quantile_in(
    train: &Dataset,
    arm: usize,
    level: f64,
    spec: &NuisanceSpec,
    fold: Option<usize>,
) -> Result<Box<dyn Predictor>> {
    let (xs, ys) = arm_rows(train, arm, fold)?;
    Ok(match spec.learner {
        LearnerKind::Gbt => Box::new(Gbt::fit(&xs, &ys, Loss::Pinball(level), &spec.gbt)),
        LearnerKind::Knn => Box::new(Knn::fit(&xs, &ys, spec.neighbors, KnnTarget::Quantile(level))),
        LearnerKind::Oracle => return Err(Error::MissingNuisance("oracle bundle".into())),
    })
}

/// Which truncation a truncated-mean regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truncation {
    /// `Y 1{Y < q(X)}`
    Below,
    /// `Y 1{Y > q(X)}`
    Above,
}

/// Regression of the truncated pseudo-outcome on `X` within `A = arm`.
/// Ties `Y = q(X)` count on neither side.
pub fn fit_rho(
    train: &Dataset,
    arm: usize,
    side: Truncation,
    quantile: &dyn Predictor,
    spec: &NuisanceSpec,
) -> Result<Box<dyn Predictor>> {
    fit_rho_in(train, arm, side, quantile, spec, None)
}

fn fit_rho_in(
    train: &Dataset,
    arm: usize,
    side: Truncation,
    quantile: &dyn Predictor,
    spec: &NuisanceSpec,
    fold: Option<usize>,
) -> Result<Box<dyn Predictor>> {
    let (xs, ys) = arm_rows(train, arm, fold)?;
    let pseudo: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, &y)| {
            let q = quantile.predict(x);
            let keep = match side {
                Truncation::Below => y < q,
                Truncation::Above => y > q,
            };
            if keep {
                y
            } else {
                0.0
            }
        })
        .collect();
    Ok(match spec.learner {
        LearnerKind::Gbt => Box::new(Gbt::fit(&xs, &pseudo, Loss::Squared, &spec.gbt)),
        LearnerKind::Knn => Box::new(Knn::fit(&xs, &pseudo, spec.neighbors, KnnTarget::Mean)),
        LearnerKind::Oracle => return Err(Error::MissingNuisance("oracle bundle".into())),
    })
}

struct SideFit {
    q: Box<dyn Predictor>,
    rho_below: Box<dyn Predictor>,
    rho_above: Box<dyn Predictor>,
}

struct ArmFit {
    lower: SideFit,
    upper: Option<SideFit>,
}

struct FoldFit {
    propensity: ClippedPropensity,
    arms: Vec<ArmFit>,
}

enum Fits {
    Learned(Vec<FoldFit>),
    Oracle(Arc<dyn NuisanceOracle>),
}

/// Fold-indexed nuisance predictors.
pub struct NuisanceModel {
    fits: Fits,
    folds: FoldAssignment,
    lambda: SensitivityParam,
    m: usize,
    kappa: f64,
    upper: bool,
}

impl fmt::Debug for NuisanceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NuisanceModel")
            .field("oracle", &matches!(self.fits, Fits::Oracle(_)))
            .field("k", &self.folds.k())
            .field("lambda", &self.lambda)
            .field("m", &self.m)
            .field("upper", &self.upper)
            .finish()
    }
}

fn fit_side(train: &Dataset, arm: usize, level: f64, spec: &NuisanceSpec, fold: usize) -> Result<SideFit> {
    let q = fit_quantile_in(train, arm, level, spec, Some(fold))?;
    let rho_below = fit_rho_in(train, arm, Truncation::Below, q.as_ref(), spec, Some(fold))?;
    let rho_above = fit_rho_in(train, arm, Truncation::Above, q.as_ref(), spec, Some(fold))?;
    Ok(SideFit { q, rho_below, rho_above })
}

/// K-fold cross-fitting with a learned model family.
pub fn fit_crossfit(dataset: &Dataset, spec: &NuisanceSpec, seed: u64) -> Result<NuisanceModel> {
    fit_crossfit_with(dataset, spec, seed, None)
}

/// As [`fit_crossfit`]; `oracle` must be given when the learner is `oracle`.
pub fn fit_crossfit_with(
    dataset: &Dataset,
    spec: &NuisanceSpec,
    seed: u64,
    oracle: Option<Arc<dyn NuisanceOracle>>,
) -> Result<NuisanceModel> {
    spec.validate()?;
    let folds = make_folds(dataset.n(), spec.k, seed)?;
    let m = dataset.m();
    if spec.learner == LearnerKind::Oracle {
        let oracle = oracle.ok_or_else(|| Error::MissingNuisance("oracle bundle".into()))?;
        return Ok(NuisanceModel::from_oracle(oracle, spec.lambda, folds, m, spec.clip_kappa));
    }
    let lo = spec.lambda.lower_level();
    let hi = spec.lambda.upper_level();
    let fits = (0..spec.k)
        .into_par_iter()
        .map(|k| -> Result<FoldFit> {
            let train = dataset.subset(&folds.complement(k));
            check_arms(&train, Some(k))?;
            let propensity = fit_propensity_in(&train, spec, Some(k))?;
            let arms = (0..m)
                .map(|a| -> Result<ArmFit> {
                    let lower = fit_side(&train, a, lo, spec, k)?;
                    let upper = if spec.upper { Some(fit_side(&train, a, hi, spec, k)?) } else { None };
                    Ok(ArmFit { lower, upper })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FoldFit { propensity, arms })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(NuisanceModel { fits: Fits::Learned(fits), folds, lambda: spec.lambda, m, kappa: spec.clip_kappa, upper: spec.upper })
}

impl NuisanceModel {
    /// Wraps a closed-form oracle; every fold serves the same functions.
    pub fn from_oracle(
        oracle: Arc<dyn NuisanceOracle>,
        lambda: SensitivityParam,
        folds: FoldAssignment,
        m: usize,
        kappa: f64,
    ) -> Self {
        Self { fits: Fits::Oracle(oracle), folds, lambda, m, kappa, upper: true }
    }

    pub fn lambda(&self) -> SensitivityParam {
        self.lambda
    }
    pub fn folds(&self) -> &FoldAssignment {
        &self.folds
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn has_upper(&self) -> bool {
        self.upper
    }
    pub fn is_oracle(&self) -> bool {
        matches!(self.fits, Fits::Oracle(_))
    }

    /// Predictions served to unit `unit`, i.e. from the model that did not
    /// see its fold.
    pub fn predict_unit(&self, unit: usize, x: &[f64]) -> PointNuisance {
        self.predict_fold(self.folds.fold_of()[unit], x)
    }

    /// Predictions of the model trained without fold `fold`. Quantiles are
    /// rearranged so the lower level never exceeds the upper one.
    pub fn predict_fold(&self, fold: usize, x: &[f64]) -> PointNuisance {
        match &self.fits {
            Fits::Oracle(o) => {
                let (lo, hi) = (self.lambda.lower_level(), self.lambda.upper_level());
                let side = |a: usize, level: f64| {
                    let q = o.quantile(x, a, level);
                    SideNuisance { q, rho_below: o.truncated_below(x, a, q), rho_above: o.truncated_above(x, a, q) }
                };
                PointNuisance {
                    propensity: clip_simplex(&o.propensity(x), self.kappa),
                    arms: (0..self.m).map(|a| ArmNuisance { lower: side(a, lo), upper: Some(side(a, hi)) }).collect(),
                }
            }
            Fits::Learned(fits) => {
                let fit = &fits[fold];
                let side = |s: &SideFit| SideNuisance {
                    q: s.q.predict(x),
                    rho_below: s.rho_below.predict(x),
                    rho_above: s.rho_above.predict(x),
                };
                let arms = fit
                    .arms
                    .iter()
                    .map(|a| {
                        let mut lower = side(&a.lower);
                        let mut upper = a.upper.as_ref().map(side);
                        if let Some(u) = upper.as_mut() {
                            if lower.q > u.q {
                                std::mem::swap(&mut lower.q, &mut u.q);
                            }
                        }
                        ArmNuisance { lower, upper }
                    })
                    .collect();
                PointNuisance { propensity: fit.propensity.predict(x), arms }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{validate_dataset, Observation};
    use crate::folds::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let rows = (0..n)
            .map(|i| {
                let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let a = if i < 2 { i } else { usize::from(rng.random_bool(0.5)) };
                let y = x[0] + a as f64 + rng.random_range(-1.0..1.0);
                Observation { x, a, y }
            })
            .collect();
        validate_dataset(rows, 2).unwrap()
    }

    fn knn_spec(neighbors: Option<usize>) -> NuisanceSpec {
        NuisanceSpec { learner: LearnerKind::Knn, neighbors, k: 2, ..Default::default() }
    }

    #[test]
    fn degenerate_arm() {
        let rows = (0..5).map(|i| Observation { x: vec![i as f64], a: 1, y: 0.0 }).collect();
        let ds = validate_dataset(rows, 2).unwrap();
        assert!(matches!(fit_propensity(&ds, &knn_spec(None)), Err(Error::DegenerateArm { arm: 0, .. })));
        assert!(matches!(fit_quantile(&ds, 0, 0.5, &knn_spec(None)), Err(Error::DegenerateArm { arm: 0, .. })));
    }

    #[test]
    fn knn_global_propensity() {
        let ds = toy(40, 1);
        let counts = ds.arm_counts();
        let p = fit_propensity(&ds, &knn_spec(Some(40))).unwrap().predict(&[0.3, 0.3]);
        assert!((p[1] - counts[1] as f64 / 40.0).abs() < 1e-12);
    }

    #[test]
    fn knn_quantile_by_hand() {
        let rows = [1.0, 2.0, 3.0].iter().map(|&y| Observation { x: vec![y], a: 0, y }).collect();
        let ds = validate_dataset(rows, 2).unwrap();
        let q = fit_quantile(&ds, 0, 2.0 / 3.0, &knn_spec(Some(3))).unwrap();
        assert_eq!(q.predict(&[0.0]), 2.0);
    }

    struct Const(f64);
    impl Predictor for Const {
        fn predict(&self, _: &[f64]) -> f64 {
            self.0
        }
    }

    #[test]
    fn rho_examples() {
        let rows: Vec<Observation> =
            (1..=10).map(|i| Observation { x: vec![i as f64], a: 1, y: i as f64 / 10.0 }).collect();
        let ds = validate_dataset(rows, 2).unwrap();
        let spec = knn_spec(Some(10));
        let above = fit_rho(&ds, 1, Truncation::Above, &Const(0.55), &spec).unwrap();
        assert!((above.predict(&[3.0]) - 0.4).abs() < 1e-12);
        let none = fit_rho(&ds, 1, Truncation::Below, &Const(-5.0), &spec).unwrap();
        assert_eq!(none.predict(&[3.0]), 0.0);
        let all = fit_rho(&ds, 1, Truncation::Below, &Const(5.0), &spec).unwrap();
        assert!((all.predict(&[3.0]) - 0.55).abs() < 1e-12);
    }

    #[test]
    fn gbt_propensity_separable() {
        let rows: Vec<Observation> = (0..300)
            .map(|i| {
                let x = i as f64 / 150.0 - 1.0;
                Observation { x: vec![x], a: usize::from(x > 0.0), y: 0.0 }
            })
            .collect();
        let ds = validate_dataset(rows, 2).unwrap();
        let p = fit_propensity(&ds, &NuisanceSpec::default()).unwrap();
        for x in [0.25, 0.5, 0.75] {
            let e = p.predict(&[x]);
            assert!(e[1] > 0.9 && e[1] <= 0.99 + 1e-12);
        }
    }

    #[test]
    fn crossfit_two_folds() {
        let rows = vec![
            Observation { x: vec![0.0], a: 0, y: 1.0 },
            Observation { x: vec![1.0], a: 1, y: 2.0 },
            Observation { x: vec![2.0], a: 0, y: 3.0 },
            Observation { x: vec![3.0], a: 1, y: 4.0 },
        ];
        let ds = validate_dataset(rows, 2).unwrap();
        match fit_crossfit(&ds, &knn_spec(None), 1) {
            Ok(model) => assert_eq!(model.folds().fold_sizes(), vec![2, 2]),
            Err(Error::DegenerateArm { fold: Some(_), .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn crossfit_leakage_free() {
        let ds = toy(60, 5);
        for spec in [knn_spec(None), NuisanceSpec { k: 3, gbt: GbtParams { trees: 20, min_leaf: 3, ..Default::default() }, ..Default::default() }] {
            let spec = NuisanceSpec { k: 3, ..spec };
            let base = fit_crossfit(&ds, &spec, 9).unwrap();
            let target = 0;
            let fold = base.folds().fold_of()[target];
            let mut rows = ds.rows().to_vec();
            for (i, r) in rows.iter_mut().enumerate() {
                if i != target && base.folds().fold_of()[i] == fold {
                    r.y += 100.0;
                }
            }
            let poisoned = validate_dataset(rows, 2).unwrap();
            let other = fit_crossfit(&poisoned, &spec, 9).unwrap();
            let x = &ds.rows()[target].x;
            assert_eq!(base.predict_unit(target, x), other.predict_unit(target, x));
        }
    }

    #[test]
    fn served_quantiles_ordered_and_clipped() {
        let ds = toy(80, 6);
        let spec = NuisanceSpec { k: 2, gbt: GbtParams { trees: 30, min_leaf: 3, ..Default::default() }, lambda: SensitivityParam::new(2.0).unwrap(), ..Default::default() };
        let model = fit_crossfit(&ds, &spec, 1).unwrap();
        for (i, r) in ds.rows().iter().enumerate() {
            let p = model.predict_unit(i, &r.x);
            assert!((p.propensity.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.propensity.iter().all(|&e| (0.01 - 1e-15..=0.99 + 1e-15).contains(&e)));
            for a in &p.arms {
                assert!(a.lower.q <= a.upper.unwrap().q);
            }
        }
    }

    proptest! {
        #[test]
        fn clipping_is_simplex(p in prop::collection::vec(0.0f64..1.0, 2..6), kappa in 0.001f64..0.15) {
            let m = p.len();
            prop_assume!(kappa * (m as f64) < 1.0);
            let c = clip_simplex(&p, kappa);
            prop_assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(c.iter().all(|&v| v >= kappa - 1e-15 && v <= 1.0 - kappa + 1e-12));
        }
    }
}
