//! A reduced sensitivity sweep: AW, MMW and MMI across a few values of
//! log lambda, summarized with 95% bands and drawn as SVG charts.

use msmpolicy::simlab::{run_sweep, summarize, SweepConfig};
use msmpolicy::svg::{line_chart, CHARTS};

fn main() -> msmpolicy::Result<()> {
    let cfg = SweepConfig {
        reps: 5,
        log_lambda_grid: vec![0.5, 1.0, 1.5, 2.5, 3.5],
        eval_n: 20_000,
        regret_fit_n: 10_000,
        ..SweepConfig::default()
    };
    let result = run_sweep(&cfg)?;
    let summary = summarize(&result.rows);
    println!("{:>6} {:>4} {:>9} {:>9} {:>9} {:>9}", "logL", "", "treated", "welfare", "worst W", "worst D");
    for r in &summary {
        println!(
            "{:>6.1} {:>4} {:>9.3} {:>9.4} {:>9.4} {:>9.4}",
            r.log_lambda, r.method, r.treated_frac.mean, r.exp_welfare.mean, r.worst_welfare.mean, r.worst_improvement.mean
        );
    }
    let dir = std::env::temp_dir().join("msmpolicy-sweep-example");
    std::fs::create_dir_all(&dir)?;
    for (metric, title) in CHARTS {
        std::fs::write(dir.join(format!("{metric}.svg")), line_chart(&summary, metric, title))?;
    }
    println!("charts written to {}", dir.display());
    Ok(())
}
