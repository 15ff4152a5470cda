//! Speaks the vision-adapter protocol with the in-process stub: raw
//! request lines first, then a validated segmentation through the zoo.

use std::sync::Arc;

use phenoflow::geometry::{compute_phenotypes, load_segmentation, ScaleFactor};
use phenoflow::imaging::write_solid_png;
use phenoflow::registry::{ModelZoo, ModelZooEntry};
use phenoflow::vision::stub::{StubAdapter, StubMode};
use phenoflow::vision::{handle_line, infer_instance_segmentation, AdapterEndpoint, AdapterPool, AdapterServer};
use phenoflow::workspace::Workspace;
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stub = StubAdapter::new(StubMode::Normal);
    for line in [r#"{"id":1,"op":"capabilities","payload":{}}"#, r#"{"id":2,"op":"dance","payload":{}}"#] {
        let resp = handle_line(line, |r| stub.handle(r));
        println!("{line}\n  <- {}", serde_json::to_string(&resp)?);
    }

    let dir = tempfile::tempdir()?;
    let ws = Workspace::create(dir.path().join("ws"))?;
    std::fs::create_dir_all(ws.root().join("images"))?;
    for name in ["a.png", "b.png"] {
        write_solid_png(ws.root().join("images").join(name), 96, 96, [20, 110, 20])?;
    }
    let zoo = ModelZoo::open(dir.path().join("zoo.json"))?;
    let entry = ModelZooEntry::new("arabidopsis", "leaf-instance-segmentation", None, "m2fb", None, AdapterEndpoint::in_process("stub"))?;
    let checkpoint = entry.identifier.clone();
    zoo.register(entry)?;
    let pool = AdapterPool::new();
    pool.register_server("stub", Arc::new(StubAdapter::new(StubMode::Normal)));

    let out = infer_instance_segmentation(&pool, &zoo, &ws, &json!("images"), &checkpoint, "results")?;
    println!("segmentation for {} images at {}", out.images, out.path);
    let seg = load_segmentation(ws.resolve(&out.path)?)?;
    for r in compute_phenotypes(&seg, ScaleFactor::PIXELS) {
        println!("{}: {} leaves, area {:.1} px", r.file_name, r.leaf_count, r.projected_leaf_area);
    }
    Ok(())
}
