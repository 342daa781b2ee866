//! Learns max-min welfare and max-min improvement quadrant policies on
//! simulated data, then scores them exactly under the known design.

use msmpolicy::nuisance::NuisanceSpec;
use msmpolicy::policy::learn::learn;
use msmpolicy::policy::{Criterion, PolicyClass};
use msmpolicy::simlab::{estimate_regret, generate, to_dataset, DgpConfig, DgpOracle, OracleEval};
use msmpolicy::SensitivityParam;

fn main() -> msmpolicy::Result<()> {
    let design = DgpConfig::default();
    let data = to_dataset(&generate(&design, 3)?)?;
    let fresh = generate(&DgpConfig { n: 50_000, ..design.clone() }, 99)?;
    let class = PolicyClass::Quadrant { i: 0, j: 1 };

    for log_lambda in [0.0, 1.0, 2.0] {
        let lambda = SensitivityParam::from_log(log_lambda)?;
        let spec = NuisanceSpec { lambda, ..NuisanceSpec::default() };
        let eval = OracleEval::new(&DgpOracle::new(&design, lambda)?, &fresh)?;
        for criterion in [Criterion::Mmw, Criterion::Mmi] {
            let (outcome, _) = learn(&data, &spec, &class, criterion, 5, None)?;
            let probs = eval.treat_probabilities(&outcome.policy)?;
            let truth = eval.metrics(&probs)?;
            let regret = estimate_regret(&outcome.policy, &class, &eval)?;
            println!(
                "log lambda {log_lambda:.1} {criterion:?}: estimate {:>7.4}, treated {:.3} | true worst welfare {:>7.4}, \
                 worst improvement {:>7.4}, regrets {:.4}/{:.4}",
                outcome.value.value,
                truth.treated_frac,
                truth.worst_welfare,
                truth.worst_improvement,
                regret.crw,
                regret.cri
            );
        }
    }
    Ok(())
}
