//! Smooth logistic policies over (1, x1, x2) learned by multi-start gradient
//! ascent, using closed-form nuisances of the simulation design.

use std::sync::Arc;

use msmpolicy::nuisance::{LearnerKind, NuisanceSpec};
use msmpolicy::policy::learn::learn;
use msmpolicy::policy::{Criterion, PolicyClass, Rule};
use msmpolicy::simlab::{evaluate_policy, generate, to_dataset, DgpConfig, DgpOracle, OracleEval};
use msmpolicy::SensitivityParam;

fn main() -> msmpolicy::Result<()> {
    let design = DgpConfig::default();
    let data = to_dataset(&generate(&design, 11)?)?;
    let fresh = generate(&DgpConfig { n: 50_000, ..design.clone() }, 12)?;
    for log_lambda in [0.5, 1.5, 2.5] {
        let lambda = SensitivityParam::from_log(log_lambda)?;
        let oracle = Arc::new(DgpOracle::new(&design, lambda)?);
        let spec = NuisanceSpec { lambda, learner: LearnerKind::Oracle, ..Default::default() };
        let eval = OracleEval::new(&oracle, &fresh)?;
        for criterion in [Criterion::Mmw, Criterion::Mmi] {
            let (outcome, _) = learn(&data, &spec, &PolicyClass::logistic(), criterion, 3, Some(oracle.clone()))?;
            let Rule::Logistic(l) = &outcome.policy.rule else { unreachable!() };
            let m = evaluate_policy(&outcome.policy, &eval)?;
            println!(
                "log lambda {log_lambda:.1} {criterion:?}: beta {:.3?}, treated {:.3}, expected welfare {:.4}, \
                 worst welfare {:.4}, worst improvement {:.4}",
                l.beta, m.treated_frac, m.exp_welfare, m.worst_welfare, m.worst_improvement
            );
        }
    }
    Ok(())
}
