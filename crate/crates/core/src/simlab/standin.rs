//! Synthetic stand-ins shaped like two observational applications: a job
//! training study (binary participation, earnings outcome, education and
//! prior earnings) and a preschool enrollment study (three arms, test-score
//! outcome, eleven child/household covariates). Both embed a latent
//! confounder that shifts selection and outcomes together. The numbers are
//! invented; only the schemas follow the applications.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::sigmoid;
use crate::data::{validate_dataset, Dataset, Observation};
use crate::error::Result;
use crate::folds::rng_from_seed;

/// Average per-participant program cost subtracted from treated outcomes
/// in the job training workflow.
pub const TRAINING_COST: f64 = 1216.0;

pub const TRAINING_COLUMNS: [&str; 2] = ["edu", "prev_earnings"];

pub const PRESCHOOL_COLUMNS: [&str; 11] = [
    "income_pctl",
    "male",
    "birth_wt",
    "entry_wt",
    "firstborn",
    "mom_grade",
    "mom_afqt",
    "mom_siblings",
    "hh_lt12",
    "hh_ge16",
    "race",
];

/// Covariates the preschool policy may split on: income percentile,
/// mother's test percentile, birth weight, weight at entry.
pub const PRESCHOOL_POLICY_FEATURES: [usize; 4] = [0, 6, 2, 3];

/// Binary participation with earnings over 30 months.
pub fn training_standin(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = rng_from_seed(seed);
    let noise = Normal::new(0.0, 6000.0).expect("positive sd");
    let rows = (0..n)
        .map(|_| {
            let edu = f64::from(rng.random_range(7..=18));
            let prev: f64 = (rng.random::<f64>() * 8000.0 * (1.0 + 0.1 * (edu - 7.0))).round();
            let motivated = rng.random::<f64>() < 0.5;
            let eligible = rng.random::<f64>() < 2.0 / 3.0;
            let take_up = if eligible { if motivated { 0.85 } else { 0.55 } } else if motivated { 0.05 } else { 0.01 };
            let a = usize::from(rng.random::<f64>() < take_up);
            let effect = 600.0 + 350.0 * (edu - 12.0) - 0.04 * prev;
            let y = (4000.0 + 900.0 * edu + 0.9 * prev
                + if motivated { 2500.0 } else { 0.0 }
                + a as f64 * effect
                + noise.sample(&mut rng))
            .max(0.0)
            .round();
            Observation { x: vec![edu, prev], a, y }
        })
        .collect();
    validate_dataset(rows, 2)?.with_covariate_names(&TRAINING_COLUMNS)
}

/// Three arms: 0 no preschool, 1 the targeted program, 2 other preschool.
pub fn preschool_standin(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = rng_from_seed(seed);
    let rows = (0..n)
        .map(|_| {
            let z = |rng: &mut crate::folds::Rng| -> f64 { rng.sample(StandardNormal) };
            let income = rng.random_range(1.0..100.0f64).round();
            let male = f64::from(u8::from(rng.random::<bool>()));
            let birth_wt = (118.0 + 18.0 * z(&mut rng)).round();
            let entry_wt = (36.0 + 0.08 * (birth_wt - 118.0) + 5.0 * z(&mut rng)).round();
            let firstborn = f64::from(u8::from(rng.random::<f64>() < 0.4));
            let mom_grade = (10.0 + income / 25.0 + 1.5 * z(&mut rng)).clamp(6.0, 18.0).round();
            let mom_afqt = (income * 0.6 + 20.0 * rng.random::<f64>()).clamp(1.0, 99.0).round();
            let mom_siblings = f64::from(rng.random_range(0..8));
            let hh_lt12 = f64::from(rng.random_range(0..4));
            let hh_ge16 = f64::from(u8::from(rng.random::<f64>() < income / 200.0));
            let race = f64::from(rng.random_range(0..3));
            let engaged: f64 = rng.random::<f64>();
            let s = (income - 50.0) / 30.0;
            let logits = [0.0, -0.8 - 1.2 * s - 0.6 * engaged, 0.4 + 0.8 * s + 0.8 * engaged];
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
            let total: f64 = w.iter().sum();
            let draw = rng.random::<f64>() * total;
            let a = if draw < w[0] { 0 } else if draw < w[0] + w[1] { 1 } else { 2 };
            let effect = match a {
                1 => 4.0 * sigmoid(-s * 2.0) - 0.02 * (entry_wt - 36.0),
                2 => 2.0 + 1.5 * s,
                _ => 0.0,
            };
            let y = 85.0 + 6.0 * s + 0.1 * (mom_afqt - 50.0) + 6.0 * engaged + effect + 10.0 * z(&mut rng);
            Observation {
                x: vec![
                    income, male, birth_wt, entry_wt, firstborn, mom_grade, mom_afqt, mom_siblings, hh_lt12, hh_ge16,
                    race,
                ],
                a,
                y,
            }
        })
        .collect();
    validate_dataset(rows, 3)?.with_covariate_names(&PRESCHOOL_COLUMNS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schemas() {
        let t = training_standin(200, 1).unwrap();
        assert_eq!(t.column_names(), &["y", "a", "edu", "prev_earnings"]);
        assert!(t.arm_counts().iter().all(|&c| c > 20));
        let p = preschool_standin(300, 1).unwrap();
        assert_eq!(p.m(), 3);
        assert_eq!(p.d(), 11);
        assert!(p.arm_counts().iter().all(|&c| c > 20), "{:?}", p.arm_counts());
    }

    #[test]
    fn csv_round_trip() {
        let t = training_standin(50, 2).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Dataset::from_csv_reader(buf.as_slice(), 2).unwrap();
        assert_eq!(back.rows(), t.rows());
        assert_eq!(back.column_names(), t.column_names());
    }
}
