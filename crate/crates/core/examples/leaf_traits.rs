//! Phenotypes of a two-leaf plant given as COCO polygons, in pixels and in
//! centimetres.
//!
//! Run with `cargo run -p phenoflow --example leaf_traits`.

use phenoflow::geometry::coco::from_coco;
use phenoflow::geometry::{compute_phenotypes, ScaleFactor, PHENOTYPE_COLUMNS};
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let doc = json!({
        "images": [{"id": 1, "file_name": "plant_01.png", "width": 200, "height": 200}],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1,
             "segmentation": [[40.0, 40.0, 100.0, 40.0, 100.0, 100.0, 40.0, 100.0]]},
            {"id": 2, "image_id": 1, "category_id": 1,
             "segmentation": [[100.0, 70.0, 160.0, 70.0, 130.0, 150.0]]}
        ],
        "categories": [{"id": 1, "name": "leaf"}]
    });
    let seg = from_coco(serde_json::from_value(doc)?)?;
    println!("{}", PHENOTYPE_COLUMNS.join("\t"));
    for scale in [ScaleFactor::PIXELS, ScaleFactor::new(0.03)?] {
        for r in compute_phenotypes(&seg, scale) {
            println!(
                "{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.4}\t{:.4}",
                r.file_name,
                r.leaf_count,
                r.average_leaf_area.unwrap_or(f64::NAN),
                r.projected_leaf_area,
                r.diameter.unwrap_or(f64::NAN),
                r.perimeter.unwrap_or(f64::NAN),
                r.compactness.unwrap_or(f64::NAN),
                r.stockiness.unwrap_or(f64::NAN),
            );
        }
    }
    Ok(())
}
