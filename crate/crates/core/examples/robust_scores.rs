//! Cross-fitted doubly robust scores on simulated confounded data, and the
//! worst-case welfare / improvement estimates they give for simple policies.

use msmpolicy::nuisance::{fit_crossfit, NuisanceSpec};
use msmpolicy::policy::Policy;
use msmpolicy::scores::{build_score_table, estimate_delta, estimate_w};
use msmpolicy::simlab::{generate, to_dataset, DgpConfig};
use msmpolicy::SensitivityParam;

fn main() -> msmpolicy::Result<()> {
    let data = to_dataset(&generate(&DgpConfig::default(), 7)?)?;
    let xs: Vec<&[f64]> = data.rows().iter().map(|r| r.x.as_slice()).collect();
    println!("n = {}, arm counts {:?}", data.n(), data.arm_counts());

    for log_lambda in [0.0, 0.5, 1.5] {
        let lambda = SensitivityParam::from_log(log_lambda)?;
        let spec = NuisanceSpec { lambda, ..NuisanceSpec::default() };
        let model = fit_crossfit(&data, &spec, 1)?;
        let table = build_score_table(&data, &model, true)?;
        for (name, policy) in [("never treat", Policy::constant(0, 2)), ("treat all", Policy::constant(1, 2))] {
            let probs = policy.assign_all(xs.iter().copied())?;
            let w = estimate_w(&table, &probs)?;
            let d = estimate_delta(&table, &probs.iter().map(|p| p[1]).collect::<Vec<_>>())?;
            println!(
                "log lambda {log_lambda:.1}  {name:<12} worst welfare {:>8.4} ({:.4})  worst improvement {:>8.4} ({:.4})",
                w.value, w.se, d.value, d.se
            );
        }
    }
    Ok(())
}
