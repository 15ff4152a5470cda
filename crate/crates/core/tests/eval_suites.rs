use phenoflow::eval::{
    read_report, regrade, run_suite, write_report, ProviderSource, Suite, SuiteReport, Verdict,
};

fn run(suite: Suite) -> (tempfile::TempDir, SuiteReport) {
    let dir = tempfile::tempdir().unwrap();
    let report = run_suite(suite, ProviderSource::Replay, dir.path()).unwrap();
    (dir, report)
}

fn assert_regrades(dir: &std::path::Path, report: &SuiteReport) {
    let again = regrade(report, dir).unwrap();
    assert_eq!(again, report.results);
}

pub fn tool_selection_replay_scores_seven_of_ten() {
    let (dir, report) = run(Suite::ToolSelection);
    assert_eq!(report.total, 10);
    assert_eq!(report.passes, 7, "{:#?}", report.results);
    assert!((report.success_rate - 0.7).abs() < 1e-12);
    let detail = |id: &str| report.result(id).unwrap().detail.clone();
    assert!(detail("ts-03").contains("unexpected tool `infer_classification`"), "{}", detail("ts-03"));
    assert!(detail("ts-06").contains("out of order"), "{}", detail("ts-06"));
    assert!(detail("ts-10").contains("`columns`"), "{}", detail("ts-10"));
    assert_regrades(dir.path(), &report);
}

pub fn model_selection_replay_scores_forty_nine_of_fifty() {
    let (dir, report) = run(Suite::ModelSelection);
    assert_eq!(report.total, 50);
    assert_eq!(report.passes, 49);
    let failed: Vec<_> = report.results.iter().filter(|r| r.verdict != Verdict::Pass).collect();
    assert_eq!(failed.len(), 1);
    assert!(failed[0].detail.contains("image classification is not admissible"), "{}", failed[0].detail);
    // One session answers every item.
    let first = &report.results[0].session_id;
    assert!(report.results.iter().all(|r| &r.session_id == first));
    assert_regrades(dir.path(), &report);
}

pub fn data_analysis_replay_scores_all_ten() {
    let (dir, report) = run(Suite::DataAnalysis);
    assert_eq!(report.total, 10);
    assert_eq!(report.passes, 10, "{:#?}", report.results);
    let sessions: std::collections::BTreeSet<_> = report.results.iter().map(|r| &r.session_id).collect();
    assert_eq!(sessions.len(), 10);
    assert_regrades(dir.path(), &report);

    let out = dir.path().join("reports");
    let (json_path, csv_path) = write_report(&report, &out).unwrap();
    assert_eq!(read_report(&json_path).unwrap(), report);
    let csv = std::fs::read_to_string(csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("suite,task_id,verdict,detail"));
    assert_eq!(lines.count(), 10);
}

pub fn tampered_output_changes_the_regraded_verdict() {
    let (dir, report) = run(Suite::DataAnalysis);
    let plot = report.result("da-10").unwrap();
    let png = dir
        .path()
        .join(&plot.session_id)
        .join("artifacts/results_for_eval/task10.png");
    std::fs::write(&png, b"not a png").unwrap();
    let again = regrade(&report, dir.path()).unwrap();
    let verdict = again.iter().find(|r| r.task_id == "da-10").unwrap();
    assert_eq!(verdict.verdict, Verdict::Fail);
}

#[cfg(test)]
mod run {
    #[test]
    fn tool_selection_replay_scores_seven_of_ten() {
        super::tool_selection_replay_scores_seven_of_ten()
    }
    #[test]
    fn model_selection_replay_scores_forty_nine_of_fifty() {
        super::model_selection_replay_scores_forty_nine_of_fifty()
    }
    #[test]
    fn data_analysis_replay_scores_all_ten() {
        super::data_analysis_replay_scores_all_ten()
    }
    #[test]
    fn tampered_output_changes_the_regraded_verdict() {
        super::tampered_output_changes_the_regraded_verdict()
    }
}
