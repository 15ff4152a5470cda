//! Registers an extra tool next to the defaults and lets a scripted model
//! call it.

use std::sync::Arc;

use phenoflow::llm::{AssistantTurn, FinishReason, ReplayProvider, ToolCallRequest};
use phenoflow::manager::{EventKind, Manager, SessionConfig};
use phenoflow::registry::{ParamKind, ParamSpec, ToolCategory, ToolOutput, ToolSpec};
use phenoflow::toolkit::{default_registry, Services, ToolContext};
use serde_json::{json, Value};

fn count_images(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let dir = args["dir"].as_str().ok_or("dir must be a string")?;
    let path = ctx.workspace.resolve(dir).map_err(|e| e.to_string())?;
    let n = std::fs::read_dir(&path)
        .map_err(|e| e.to_string())?
        .flatten()
        .filter(|e| e.path().extension().is_some_and(|x| x == "png"))
        .count();
    Ok(ToolOutput::value(json!({"png_files": n})))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let registry = default_registry();
    let spec = ToolSpec::new("count_images", ToolCategory::Analysis, "Counts PNG files in a directory.")
        .param(ParamSpec::required("dir", ParamKind::String, "Directory relative to the workspace"));
    registry.register_tool(spec, Arc::new(count_images))?;
    for (category, tools) in registry.by_category() {
        println!("{category:?}: {}", tools.join(", "));
    }

    let manager = Manager::new(Arc::new(Services::open(dir.path())?), Arc::new(registry));
    let turns = vec![
        AssistantTurn {
            text: Some("Plan: count the images.".into()),
            tool_calls: vec![ToolCallRequest::new("c1", "count_images", json!({"dir": "."}))],
            finish: FinishReason::ToolCalls,
        },
        AssistantTurn {
            text: Some("Counted. TERMINATE".into()),
            tool_calls: Vec::new(),
            finish: FinishReason::Stop,
        },
    ];
    let id = manager.start_session(SessionConfig::new(Arc::new(ReplayProvider::from_turns(turns))))?;
    let root = manager.workspace(&id)?.root().to_owned();
    for i in 0..3 {
        phenoflow::imaging::write_solid_png(root.join(format!("p{i}.png")), 8, 8, [0, 128, 0])?;
    }
    manager.submit_user_message(&id, "How many images are there?", &[])?;
    for e in manager.events(&id, 0)? {
        if e.kind == EventKind::ToolResult {
            println!("{}", e.payload["output"]);
        }
    }
    Ok(())
}
