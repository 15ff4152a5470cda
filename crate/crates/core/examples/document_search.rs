//! Ingests a few protocol notes into a retrieval index and queries it with
//! the deterministic stub embedder.

use phenoflow::agents::{Document, RagStore};
use phenoflow::llm::StubEmbedder;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let store = RagStore::open(dir.path())?;
    let embedder = StubEmbedder::default();
    let docs = [
        Document::new("imaging", "Top-view images are taken daily at noon under diffuse light. The camera sits 60 cm above the tray."),
        Document::new("watering", "Trays are watered every second day with 200 ml per pot. Drought plots receive half the volume."),
        Document::new("scale", "A ruler in the first frame of each session calibrates pixel size; 0.03 cm per pixel is typical."),
    ];
    let index = store.ingest(&docs, &embedder)?;
    for question in ["How high is the camera?", "How much water do drought plots get?", "What is the pixel size?"] {
        let hits = store.query(&index, question, 1, &embedder)?;
        let top = &hits[0];
        println!("{question}\n  -> [{}] {:.3} {}", top.doc_id, top.score, top.text.trim());
    }
    Ok(())
}
