//! Trait extraction for an Arabidopsis time series: segmentation, trait
//! geometry, and a merge with the image metadata.

use std::path::Path;

use serde_json::{json, Value};

use crate::imaging::write_rgb_png;
use crate::llm::{AssistantTurn, FinishReason, ReplayProvider, ToolCallRequest};
use crate::pipeline::Binding;
use crate::registry::{ModelZooEntry, RegistryError};
use crate::vision::AdapterEndpoint;

pub const METADATA_PATH: &str = "./data/aracrop_metadata.json";
pub const IMAGE_DIR: &str = "./data/images";
pub const OUTPUT_DIR: &str = "./results/Case1";
pub const SEGMENTATION_PATH: &str = "./results/Case1/ins_seg_results.json";
pub const PHENOTYPES_PATH: &str = "./results/Case1/phenotypes.csv";
pub const RESULT_PATH: &str = "./results/Case1/aracrop_phenotypes.csv";
pub const CHECKPOINT: &str = "arabidopsis_leaf-instance-segmentation_cvppp2017-a1a4_m2fb_fullft";
pub const PIXEL_TO_CM: f64 = 0.03;
pub const PIPELINE_NAME: &str = "ara_crop_pipeline";
pub const ECOTYPES: [&str; 3] = ["Col-0", "ctr1", "ein2"];
pub const PLANTS: usize = 24;
pub const DAYS: [u32; 2] = [12, 26];
pub const METADATA_COLUMNS: [&str; 3] = ["plant_id", "ecotype", "days_after_sowing"];

pub const PROMPT: &str = "\
The directory ./data/images holds top-view photos of 24 Arabidopsis plants from three ecotypes, \
each photographed on several days after sowing. The file ./data/aracrop_metadata.json lists every \
image with the keys file_name, plant_id, ecotype and days_after_sowing.
For every image, measure the leaf count, projected leaf area, average leaf area, and the diameter, \
perimeter, compactness and stockiness of the whole plant. One pixel is 0.03 cm.
Join the measurements to the metadata by file name and write the table to \
./results/Case1/aracrop_phenotypes.csv.";

/// Stdlib-only so the merged file keeps the trait values byte for byte.
pub const MERGE_SCRIPT: &str = r#"import csv
import json

with open('./results/Case1/phenotypes.csv', newline='') as f:
    phenotypes = list(csv.DictReader(f))
with open('./data/aracrop_metadata.json') as f:
    metadata = {row['file_name']: row for row in json.load(f)}

extra = ['plant_id', 'ecotype', 'days_after_sowing']
fields = list(phenotypes[0].keys()) + extra
merged = 0
with open('./results/Case1/aracrop_phenotypes.csv', 'w', newline='') as f:
    writer = csv.DictWriter(f, fieldnames=fields, lineterminator='\n')
    writer.writeheader()
    for row in phenotypes:
        meta = metadata.get(row['file_name'])
        if meta is None:
            continue
        out = dict(row)
        for key in extra:
            out[key] = meta[key]
        writer.writerow(out)
        merged += 1
print(f'merged rows: {merged}')
"#;

pub fn image_name(plant: usize, day: u32) -> String {
    format!("plant{plant:02}_day{day:02}.png")
}

/// Writes images and metadata below `root`; returns the image count.
pub fn write_dataset(root: &Path) -> std::io::Result<usize> {
    write_dataset_with(root, PLANTS, &DAYS)
}

pub fn write_dataset_with(root: &Path, plants: usize, days: &[u32]) -> std::io::Result<usize> {
    let images = root.join(IMAGE_DIR);
    std::fs::create_dir_all(&images)?;
    let (w, h) = (96u32, 96u32);
    let mut records = Vec::new();
    for plant in 1..=plants {
        for &day in days {
            let name = image_name(plant, day);
            let shade = (40 + (plant * 7 + day as usize) % 120) as u8;
            let rgb: Vec<u8> = (0..w * h).flat_map(|_| [shade / 2, shade + 60, shade / 3]).collect();
            write_rgb_png(images.join(&name), w, h, &rgb)
                .map_err(|e| std::io::Error::other(e.to_string()))?;
            records.push(json!({
                "file_name": name,
                "plant_id": plant,
                "ecotype": ECOTYPES[(plant - 1) % ECOTYPES.len()],
                "days_after_sowing": day,
            }));
        }
    }
    let text = serde_json::to_string_pretty(&Value::Array(records.clone())).expect("json");
    super::write_text(root, METADATA_PATH, &text)?;
    Ok(records.len())
}

/// Two segmentation checkpoints served by the in-process stub adapter.
pub fn model_zoo_entries() -> Result<Vec<ModelZooEntry>, RegistryError> {
    let stub = AdapterEndpoint::in_process("stub");
    let mut ara = ModelZooEntry::new(
        "arabidopsis",
        "leaf-instance-segmentation",
        Some("cvppp2017-a1a4"),
        "m2fb",
        Some("fullft"),
        stub.clone(),
    )?;
    ara.adapter = ara.adapter.with_checkpoint(&format!("fengchen025/{CHECKPOINT}"));
    let potato = ModelZooEntry::new("potato", "leaf-instance-segmentation", None, "leaf-only-sam", None, stub)?;
    Ok(vec![ara, potato])
}

fn call(id: &str, name: &str, arguments: Value) -> ToolCallRequest {
    ToolCallRequest::new(id, name, arguments)
}

fn calls(text: &str, calls: Vec<ToolCallRequest>) -> AssistantTurn {
    AssistantTurn {
        text: Some(text.to_owned()),
        tool_calls: calls,
        finish: FinishReason::ToolCalls,
    }
}

/// Manager turns with the code writer's reply in the slot where the
/// `coding` call consults it.
pub fn turns() -> Vec<AssistantTurn> {
    vec![
        calls(
            "Plan:\n1. Look up a leaf instance segmentation checkpoint for Arabidopsis.\n\
             2. Segment every image listed in the metadata.\n\
             3. Compute the seven traits from the segmentation at 0.03 cm per pixel.\n\
             4. Join the traits to the metadata on file_name and save the CSV.\n\
             Starting with the model zoo.",
            vec![call("call_1", "get_model_zoo", json!({}))],
        ),
        calls(
            "The Arabidopsis checkpoint trained on CVPPP 2017 fits this dataset.",
            vec![call(
                "call_2",
                "infer_instance_segmentation",
                json!({"file_path": METADATA_PATH, "checkpoint": CHECKPOINT, "output_dir": OUTPUT_DIR}),
            )],
        ),
        calls(
            "Segmentation finished. Computing traits.",
            vec![call(
                "call_3",
                "compute_phenotypes_from_ins_seg",
                json!({"ins_seg_result_path": SEGMENTATION_PATH, "save_path": PHENOTYPES_PATH, "pixel_to_cm": PIXEL_TO_CM}),
            )],
        ),
        calls(
            "Traits saved. Merging them with the metadata.",
            vec![call(
                "call_4",
                "coding",
                json!({
                    "message": format!("Join the rows of {PHENOTYPES_PATH} with the records of {METADATA_PATH} on file_name and write the result to {RESULT_PATH}."),
                    "context_paths": [PHENOTYPES_PATH, METADATA_PATH],
                }),
            )],
        ),
        AssistantTurn::text(format!("```python\n{MERGE_SCRIPT}```")),
        AssistantTurn::text(format!(
            "The traits of every image are joined with plant_id, ecotype and days_after_sowing in {RESULT_PATH}.\n\
             Anything else? TERMINATE"
        )),
    ]
}

pub fn provider() -> ReplayProvider {
    ReplayProvider::from_turns(turns())
}

/// Parameters of the saved pipeline: input metadata and output directory
/// are required, the scale defaults to its recorded value.
pub fn bindings() -> Vec<Binding> {
    let mut metadata = Binding::required("metadata_path", json!(METADATA_PATH));
    metadata.description = Some("Image metadata with a file_name column".into());
    let mut output = Binding::required("output_dir", json!(OUTPUT_DIR));
    output.description = Some("Directory for all results".into());
    let mut scale = Binding::optional("pixel_to_cm", json!(PIXEL_TO_CM));
    scale.description = Some("Centimetres per pixel".into());
    vec![metadata, output, scale]
}
