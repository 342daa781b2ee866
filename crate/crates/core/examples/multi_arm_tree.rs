//! Depth-2 multi-action policy tree on the bundled three-arm preschool
//! stand-in (0 none, 1 targeted program, 2 other preschool).

use msmpolicy::nuisance::NuisanceSpec;
use msmpolicy::policy::learn::learn;
use msmpolicy::policy::{Criterion, PolicyClass};
use msmpolicy::simlab::standin::PRESCHOOL_POLICY_FEATURES;
use msmpolicy::{Dataset, SensitivityParam};

fn main() -> msmpolicy::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/preschool_standin.csv");
    let data = Dataset::read_csv(path, 3)?;
    let class = PolicyClass::Tree { depth: 2, features: Some(PRESCHOOL_POLICY_FEATURES.to_vec()) };
    for log_lambda in [0.0, 0.25, 0.5] {
        let spec = NuisanceSpec { lambda: SensitivityParam::from_log(log_lambda)?, upper: false, ..Default::default() };
        let (outcome, _) = learn(&data, &spec, &class, Criterion::Mmw, 1, None)?;
        let xs: Vec<&[f64]> = data.rows().iter().map(|r| r.x.as_slice()).collect();
        let probs = outcome.policy.assign_all(xs)?;
        let shares: Vec<f64> = (0..3).map(|t| probs.iter().map(|p| p[t]).sum::<f64>() / probs.len() as f64).collect();
        println!(
            "log lambda {log_lambda:.2}: worst welfare {:.3} ({:.3}), arm shares {:.3?}",
            outcome.value.value, outcome.value.se, shares
        );
        if log_lambda == 0.5 {
            println!("{}", outcome.policy.to_json()?);
        }
    }
    Ok(())
}
