//! Job-training style workflow on the bundled stand-in: charge the program
//! cost to participants, learn quadrant rules in (education, prior
//! earnings) at increasing sensitivity, and report how targeting shrinks.

use msmpolicy::nuisance::NuisanceSpec;
use msmpolicy::policy::learn::learn;
use msmpolicy::policy::{Criterion, PolicyClass, Rule};
use msmpolicy::simlab::standin::TRAINING_COST;
use msmpolicy::{Dataset, SensitivityParam};

fn main() -> msmpolicy::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/training_standin.csv");
    let data = Dataset::read_csv(path, 2)?.with_arm_cost(1, TRAINING_COST);
    let class = PolicyClass::Quadrant { i: 0, j: 1 };
    for log_lambda in [0.0, 0.5, 1.0] {
        let spec = NuisanceSpec { lambda: SensitivityParam::from_log(log_lambda)?, ..Default::default() };
        for criterion in [Criterion::Mmw, Criterion::Mmi] {
            let (o, _) = learn(&data, &spec, &class, criterion, 1, None)?;
            let Rule::Quadrant(q) = &o.policy.rule else { unreachable!() };
            let side = |s: i8| if s > 0 { ">" } else { "<" };
            println!(
                "log lambda {log_lambda:.2} {criterion:?}: treat if edu {} {} and prev {} {} -> treated {:.3}, estimate {:.0} ({:.0})",
                side(q.s1),
                q.t1,
                side(q.s2),
                q.t2,
                o.treated_fraction,
                o.value.value,
                o.value.se
            );
        }
    }
    Ok(())
}
