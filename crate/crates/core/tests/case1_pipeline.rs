use std::sync::Arc;
use std::time::Instant;

use phenoflow::fixtures::{self, case1};
use phenoflow::geometry::PHENOTYPE_COLUMNS;
use phenoflow::manager::{EventKind, Manager, SessionConfig, SessionStatus};
use phenoflow::pipeline::Step;
use phenoflow::table::Table;
use serde_json::json;

fn manager(root: &std::path::Path) -> Manager {
    let m = Manager::open(root).unwrap();
    fixtures::install_models(&m.services().model_zoo, &case1::model_zoo_entries().unwrap()).unwrap();
    m
}

fn case1_session(m: &Manager) -> String {
    let id = m.start_session(SessionConfig::new(Arc::new(case1::provider()))).unwrap();
    case1::write_dataset(m.workspace(&id).unwrap().root()).unwrap();
    id
}

pub fn case1_end_to_end_produces_merged_table() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let m = manager(dir.path());
    let id = case1_session(&m);
    let status = m.submit_user_message(&id, case1::PROMPT, &[]).unwrap();
    assert_eq!(status, SessionStatus::Terminated);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");

    let events = m.events(&id, 0).unwrap();
    m.check_transcript(&id).unwrap();
    let kinds: Vec<EventKind> = events.iter().map(|e| e.kind).collect();
    let plan = kinds.iter().position(|k| *k == EventKind::Plan).unwrap();
    let first_call = kinds.iter().position(|k| *k == EventKind::ToolCallProposed).unwrap();
    assert!(plan < first_call);
    assert_eq!(*kinds.last().unwrap(), EventKind::Terminated);
    assert!(events.iter().all(|e| e.kind != EventKind::Error));
    let summary = events.iter().find(|e| e.kind == EventKind::Summary).unwrap();
    assert!(!summary.payload["text"].as_str().unwrap().contains("TERMINATE"));

    let ws = m.workspace(&id).unwrap();
    let table = Table::read_csv(ws.resolve(case1::RESULT_PATH).unwrap()).unwrap();
    let mut expected: Vec<&str> = PHENOTYPE_COLUMNS.to_vec();
    expected.extend(case1::METADATA_COLUMNS);
    assert_eq!(table.headers, expected);
    assert_eq!(table.rows.len(), case1::PLANTS * case1::DAYS.len());
    // Every image appears exactly once and keeps its own metadata.
    let mut names: Vec<&String> = table.rows.iter().map(|r| &r[0]).collect();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), table.rows.len());
    let created: Vec<&str> = events
        .iter()
        .filter(|e| e.kind == EventKind::ArtifactCreated)
        .filter_map(|e| e.payload["path"].as_str())
        .collect();
    assert!(created.iter().any(|p| p.ends_with("aracrop_phenotypes.csv")), "{created:?}");
    assert!(created.iter().any(|p| p.ends_with("ins_seg_results.json")));
}

pub fn summarised_pipeline_replays_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    let id = case1_session(&m);
    m.submit_user_message(&id, case1::PROMPT, &[]).unwrap();

    let manifest = m
        .summarise_pipeline(&id, case1::PIPELINE_NAME, "Arabidopsis traits merged with metadata", &case1::bindings())
        .unwrap();
    let labels: Vec<&str> = manifest.steps.iter().map(Step::label).collect();
    assert_eq!(
        labels,
        ["get_model_zoo", "infer_instance_segmentation", "compute_phenotypes_from_ins_seg", "script"]
    );
    assert!(matches!(manifest.steps[3], Step::Script { .. }));
    let names: Vec<&str> = manifest.params.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["metadata_path", "output_dir", "pixel_to_cm"]);
    assert!(m.services().pipelines.contains(case1::PIPELINE_NAME));

    // Same inputs in a fresh session and working directory.
    let replay_id = m
        .start_session(SessionConfig::new(Arc::new(phenoflow::llm::ReplayProvider::from_turns(vec![]))))
        .unwrap();
    let replay_ws = m.workspace(&replay_id).unwrap();
    case1::write_dataset(replay_ws.root()).unwrap();
    let report = m
        .replay_pipeline(
            &replay_id,
            case1::PIPELINE_NAME,
            &json!({"metadata_path": case1::METADATA_PATH, "output_dir": case1::OUTPUT_DIR}),
        )
        .unwrap();
    assert!(report.ok, "{report:?}");
    assert_eq!(m.status(&replay_id).unwrap(), SessionStatus::Terminated);
    let original = std::fs::read(m.workspace(&id).unwrap().resolve(case1::RESULT_PATH).unwrap()).unwrap();
    let replayed = std::fs::read(replay_ws.resolve(case1::RESULT_PATH).unwrap()).unwrap();
    assert_eq!(original, replayed);
    m.check_transcript(&replay_id).unwrap();

    // New output directory: everything lands there instead.
    let other = m
        .start_session(SessionConfig::new(Arc::new(phenoflow::llm::ReplayProvider::from_turns(vec![]))))
        .unwrap();
    let other_ws = m.workspace(&other).unwrap();
    case1::write_dataset(other_ws.root()).unwrap();
    let report = m
        .replay_pipeline(
            &other,
            case1::PIPELINE_NAME,
            &json!({"metadata_path": case1::METADATA_PATH, "output_dir": "./results/rerun"}),
        )
        .unwrap();
    assert!(report.ok, "{report:?}");
    let rerun = std::fs::read(other_ws.resolve("results/rerun/aracrop_phenotypes.csv").unwrap()).unwrap();
    assert_eq!(rerun, original);
    assert!(!other_ws.resolve(case1::RESULT_PATH).unwrap().exists());
}

pub fn replay_with_missing_parameter_runs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let m = manager(dir.path());
    let id = case1_session(&m);
    m.submit_user_message(&id, case1::PROMPT, &[]).unwrap();
    m.summarise_pipeline(&id, case1::PIPELINE_NAME, "", &case1::bindings()).unwrap();
    let before = m.events(&id, 0).unwrap().len();
    let err = m
        .replay_pipeline(&id, case1::PIPELINE_NAME, &json!({"metadata_path": case1::METADATA_PATH}))
        .unwrap_err();
    assert!(err.to_string().contains("output_dir"), "{err}");
    assert_eq!(m.events(&id, 0).unwrap().len(), before);
}

#[cfg(test)]
mod run {
    #[test]
    fn case1_end_to_end_produces_merged_table() {
        super::case1_end_to_end_produces_merged_table()
    }
    #[test]
    fn summarised_pipeline_replays_byte_identically() {
        super::summarised_pipeline_replays_byte_identically()
    }
    #[test]
    fn replay_with_missing_parameter_runs_nothing() {
        super::replay_with_missing_parameter_runs_nothing()
    }
}
