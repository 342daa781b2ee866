//! Robust policy learning under the marginal sensitivity model.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod data;
pub mod error;
pub mod folds;
pub mod nuisance;
pub mod policy;
pub mod scores;
pub mod selfcheck;
pub mod simlab;
pub mod svg;

pub use data::{validate_dataset, Dataset, Observation, SensitivityParam};
pub use error::{Error, Result};
