//! Runs the numerical self-checks and prints one line per check.

use msmpolicy::selfcheck::{run_selfcheck, SelfcheckOptions};

fn main() -> msmpolicy::Result<()> {
    let report = run_selfcheck(&SelfcheckOptions::default())?;
    for suite in &report.suites {
        println!("[{}] {} ({:.2}s)", if suite.passed { "pass" } else { "FAIL" }, suite.name, suite.seconds);
        for c in &suite.checks {
            let note = c.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default();
            println!("    {:<4} {:<62} measured {:>10.3e}  tol {:.1e}{note}", if c.passed { "ok" } else { "FAIL" }, c.name, c.measured, c.tolerance);
        }
    }
    println!("overall: {}", if report.passed { "pass" } else { "FAIL" });
    Ok(())
}
