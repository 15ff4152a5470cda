//! A full offline session: pre-recorded assistant turns drive model-zoo
//! lookup, segmentation with the stub adapter, trait extraction and a
//! metadata merge. Every event is printed as it is persisted.

use std::sync::Arc;

use phenoflow::fixtures::{self, case1};
use phenoflow::manager::{EventObserver, Manager, SessionConfig, SessionEvent};
use phenoflow::table::Table;

struct Print;

impl EventObserver for Print {
    fn on_event(&self, _session: &str, e: &SessionEvent) {
        let text = e.payload.get("text").and_then(|t| t.as_str()).unwrap_or("");
        let tool = e.payload.get("tool").and_then(|t| t.as_str()).unwrap_or("");
        println!("{:>3} {:<20} {tool}{}", e.seq, e.kind.as_str(), text.lines().next().unwrap_or(""));
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let manager = Manager::open(dir.path())?;
    fixtures::install_models(&manager.services().model_zoo, &case1::model_zoo_entries()?)?;
    manager.add_observer(Arc::new(Print));

    let id = manager.start_session(SessionConfig::new(Arc::new(case1::provider())))?;
    let ws = manager.workspace(&id)?;
    case1::write_dataset(ws.root())?;
    let status = manager.submit_user_message(&id, case1::PROMPT, &[])?;
    println!("status: {status:?}");

    let table = Table::read_csv(ws.resolve(case1::RESULT_PATH)?)?;
    println!("{}", table.headers.join(","));
    for row in table.rows.iter().take(3) {
        println!("{}", row.join(","));
    }
    println!("... {} rows", table.rows.len());
    Ok(())
}
