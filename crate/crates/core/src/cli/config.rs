//! JSON run configurations. Every record rejects unknown keys; flags given
//! on the command line override the matching fields after parsing.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::SensitivityParam;
use crate::error::{Error, Result};
use crate::nuisance::gbt::GbtParams;
use crate::nuisance::{LearnerKind, NuisanceSpec};
use crate::policy::{Criterion, PolicyClass};
use crate::simlab::DgpConfig;

/// Which generator `simulate` draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    /// The two-covariate confounded design with a latent binary confounder.
    #[default]
    Dgp,
    /// Job-training-shaped stand-in (binary, `edu`, `prev_earnings`).
    Training,
    /// Preschool-shaped stand-in (three arms, eleven covariates).
    Preschool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub design: Design,
    pub dgp: DgpConfig,
    /// Overrides `dgp.n`; required size for the stand-ins.
    pub n: Option<usize>,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { design: Design::Dgp, dgp: DgpConfig::default(), n: None, seed: 0 }
    }
}

/// Nuisance learner settings shared by `fit`, `evaluate` and `bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NuisanceConfig {
    pub learner: LearnerKind,
    pub gbt: GbtParams,
    pub neighbors: Option<usize>,
    pub k: usize,
    pub clip_kappa: f64,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        let spec = NuisanceSpec::default();
        Self { learner: spec.learner, gbt: spec.gbt, neighbors: spec.neighbors, k: spec.k, clip_kappa: spec.clip_kappa }
    }
}

impl NuisanceConfig {
    pub fn spec(&self, lambda: SensitivityParam, upper: bool) -> NuisanceSpec {
        NuisanceSpec {
            learner: self.learner,
            gbt: self.gbt,
            neighbors: self.neighbors,
            clip_kappa: self.clip_kappa,
            lambda,
            k: self.k,
            upper,
        }
    }

    /// Oracle nuisances exist only for data drawn from a known design.
    pub fn check_oracle(&self, dgp: Option<&DgpConfig>) -> Result<()> {
        if self.learner == LearnerKind::Oracle && dgp.is_none() {
            return Err(Error::BadConfig("learner `oracle` requires a `dgp` block describing the data".into()));
        }
        Ok(())
    }
}

fn default_m() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data: PathBuf,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_method")]
    pub method: Criterion,
    #[serde(default)]
    pub log_lambda: f64,
    pub class: PolicyClass,
    #[serde(default)]
    pub nuisance: NuisanceConfig,
    /// Subtracted from the outcome of every unit not on arm 0.
    #[serde(default)]
    pub treated_cost: f64,
    /// Design the data were drawn from; enables `learner: oracle`.
    #[serde(default)]
    pub dgp: Option<DgpConfig>,
    #[serde(default)]
    pub seed: u64,
}

fn default_method() -> Criterion {
    Criterion::Mmw
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub data: PathBuf,
    #[serde(default = "default_m")]
    pub m: usize,
    pub policy: PathBuf,
    /// Optional reference policy for the worst-case improvement over it.
    #[serde(default)]
    pub baseline: Option<PathBuf>,
    #[serde(default)]
    pub log_lambda: f64,
    #[serde(default)]
    pub nuisance: NuisanceConfig,
    #[serde(default)]
    pub treated_cost: f64,
    /// When set, the policy is also scored exactly under this design on a
    /// fresh sample of `oracle_n` units.
    #[serde(default)]
    pub dgp: Option<DgpConfig>,
    #[serde(default = "default_oracle_n")]
    pub oracle_n: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_oracle_n() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub data: PathBuf,
    #[serde(default = "default_bounds_grid")]
    pub log_lambda_grid: Vec<f64>,
    #[serde(default)]
    pub nuisance: NuisanceConfig,
    #[serde(default)]
    pub dgp: Option<DgpConfig>,
    #[serde(default)]
    pub seed: u64,
}

fn default_bounds_grid() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 1.5]
}

/// Parses `text` as the config record `T`, reporting schema problems as
/// configuration errors.
pub fn parse<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::BadConfig(format!("{what} config: {e}")))
}
