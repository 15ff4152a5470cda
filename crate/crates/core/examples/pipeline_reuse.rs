//! Turns a finished session into a parameterised pipeline and re-runs it
//! on a fresh working directory with a different output location.

use std::sync::Arc;

use phenoflow::fixtures::{self, case1};
use phenoflow::llm::ReplayProvider;
use phenoflow::manager::{Manager, SessionConfig};
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let manager = Manager::open(dir.path())?;
    fixtures::install_models(&manager.services().model_zoo, &case1::model_zoo_entries()?)?;

    let source = manager.start_session(SessionConfig::new(Arc::new(case1::provider())))?;
    case1::write_dataset(manager.workspace(&source)?.root())?;
    manager.submit_user_message(&source, case1::PROMPT, &[])?;

    let manifest = manager.summarise_pipeline(&source, case1::PIPELINE_NAME, "Rosette traits with metadata", &case1::bindings())?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);

    let target = manager.start_session(SessionConfig::new(Arc::new(ReplayProvider::from_turns(Vec::new()))))?;
    let ws = manager.workspace(&target)?;
    case1::write_dataset(ws.root())?;
    let report = manager.replay_pipeline(
        &target,
        case1::PIPELINE_NAME,
        &json!({"metadata_path": case1::METADATA_PATH, "output_dir": "./results/rerun"}),
    )?;
    for step in &report.steps {
        println!("step {} {:?} {:?}", step.index, step.status, step.artifacts);
    }
    let same = std::fs::read(manager.workspace(&source)?.resolve(case1::RESULT_PATH)?)?
        == std::fs::read(ws.resolve("results/rerun/aracrop_phenotypes.csv")?)?;
    println!("ok: {}, identical table: {same}", report.ok);
    Ok(())
}
