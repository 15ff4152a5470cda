//! Runs the three benchmark suites with the replay provider and prints
//! per-task verdicts.

use phenoflow::eval::{run_suite, ProviderSource, Suite, Verdict};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    for suite in Suite::ALL {
        let report = run_suite(suite, ProviderSource::Replay, &dir.path().join(suite.as_str()))?;
        println!("{suite}: {}/{}", report.passes, report.total);
        for r in report.results.iter().filter(|r| r.verdict != Verdict::Pass) {
            println!("  {} {}: {}", r.task_id, r.verdict.as_str(), r.detail);
        }
    }
    Ok(())
}
