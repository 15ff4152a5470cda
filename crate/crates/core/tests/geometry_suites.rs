use std::f64::consts::PI;
use std::time::Instant;

use phenoflow::geometry::coco::{encode_rle, from_coco};
use phenoflow::geometry::raster::Bitmap;
use phenoflow::geometry::{compute_phenotypes, MeasurePath, PhenotypeRecord, ScaleFactor, SegmentationSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn coco(width: u32, height: u32, segmentations: Vec<Value>) -> SegmentationSet {
    let annotations: Vec<Value> = segmentations
        .into_iter()
        .enumerate()
        .map(|(i, s)| json!({"id": i + 1, "image_id": 1, "category_id": 1, "segmentation": s}))
        .collect();
    let doc = json!({
        "images": [{"id": 1, "file_name": "plant.png", "width": width, "height": height}],
        "annotations": annotations,
        "categories": [{"id": 1, "name": "leaf"}],
    });
    from_coco(serde_json::from_value(doc).unwrap()).unwrap()
}

fn rle(mask: &Bitmap) -> Value {
    serde_json::to_value(encode_rle(mask)).unwrap()
}

fn one(seg: &SegmentationSet, scale: ScaleFactor) -> PhenotypeRecord {
    compute_phenotypes(seg, scale).remove(0)
}

pub fn analytic_square() {
    let start = Instant::now();
    let seg = coco(256, 256, vec![json!([[20.0, 20.0, 120.0, 20.0, 120.0, 120.0, 20.0, 120.0]])]);
    let r = one(&seg, ScaleFactor::PIXELS);
    assert_eq!(r.path, Some(MeasurePath::Analytic));
    assert!((r.projected_leaf_area - 10000.0).abs() <= 1e-6);
    assert!((r.perimeter.unwrap() - 400.0).abs() <= 1e-6);
    assert!((r.diameter.unwrap() - 141.421).abs() <= 1e-3);
    assert!((r.diameter.unwrap() - 100.0 * 2f64.sqrt()).abs() <= 1e-6);
    assert!((r.compactness.unwrap() - 1.0).abs() <= 1e-9);
    assert!((r.stockiness.unwrap() - PI / 4.0).abs() <= 1e-6);
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

fn disk(size: u32, cx: f64, cy: f64, r: f64) -> Bitmap {
    let mut bm = Bitmap::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (f64::from(x) + 0.5 - cx, f64::from(y) + 0.5 - cy);
            if dx * dx + dy * dy <= r * r {
                bm.set(x, y, true);
            }
        }
    }
    bm
}

/// Reference measurements computed without the library's tracer: pixel
/// count, brute-force farthest pair of edge pixels, and the crack length of
/// the mask boundary.
struct Oracle {
    area: f64,
    diameter: f64,
    crack_length: f64,
}

fn oracle(mask: &Bitmap) -> Oracle {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let on = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && mask.get(x as u32, y as u32);
    let mut area = 0.0;
    let mut crack = 0.0;
    let mut edge = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !on(x, y) {
                continue;
            }
            area += 1.0;
            let open = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .filter(|(dx, dy)| !on(x + dx, y + dy))
                .count();
            crack += open as f64;
            if open > 0 {
                edge.push((x as f64 + 0.5, y as f64 + 0.5));
            }
        }
    }
    let mut diameter: f64 = 0.0;
    for (i, a) in edge.iter().enumerate() {
        for b in &edge[i + 1..] {
            diameter = diameter.max(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt());
        }
    }
    Oracle { area, diameter, crack_length: crack }
}

pub fn rasterized_disk() {
    let start = Instant::now();
    let mask = disk(256, 128.0, 128.0, 100.0);
    let r = one(&coco(256, 256, vec![rle(&mask)]), ScaleFactor::PIXELS);
    assert_eq!(r.path, Some(MeasurePath::Raster));
    let o = oracle(&mask);

    assert_eq!(r.projected_leaf_area, o.area);
    assert!((r.projected_leaf_area - PI * 1e4).abs() <= 0.01 * PI * 1e4, "{}", r.projected_leaf_area);
    let d = r.diameter.unwrap();
    assert!((198.0..=202.0).contains(&d), "diameter {d}");
    assert!((d - o.diameter).abs() < 1e-9, "{d} vs {}", o.diameter);
    // Crack length overestimates a circle's perimeter by 4/pi.
    let p = r.perimeter.unwrap();
    let reference = o.crack_length * PI / 4.0;
    assert!((p - reference).abs() <= 0.02 * reference, "{p} vs {reference}");
    let s = r.stockiness.unwrap();
    assert!((0.93..=1.02).contains(&s), "stockiness {s}");
    let c = r.compactness.unwrap();
    assert!((0.98..=1.0).contains(&c), "compactness {c}");
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

fn random_set(rng: &mut ChaCha8Rng) -> SegmentationSet {
    let size = 96;
    let n = rng.gen_range(1..=5);
    let masks = (0..n)
        .map(|_| {
            if rng.gen_bool(0.5) {
                let r = rng.gen_range(3.0..20.0);
                let cx = rng.gen_range(r..f64::from(size) - r);
                let cy = rng.gen_range(r..f64::from(size) - r);
                rle(&disk(size, cx, cy, r))
            } else {
                let (x, y) = (rng.gen_range(0.0..60.0), rng.gen_range(0.0..60.0));
                let (w, h) = (rng.gen_range(2.0..30.0), rng.gen_range(2.0..30.0));
                json!([[x, y, x + w, y, x + w, y + h, x, y + h]])
            }
        })
        .collect();
    coco(size, size, masks)
}

pub fn scaling_law_over_random_mask_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let s = 0.03;
    let scale = ScaleFactor::new(s).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    for _ in 0..20 {
        let seg = random_set(&mut rng);
        let px = one(&seg, ScaleFactor::PIXELS);
        let cm = one(&seg, scale);
        assert_eq!(px.leaf_count, cm.leaf_count);
        assert!(close(cm.projected_leaf_area, px.projected_leaf_area * s * s));
        assert!(close(cm.average_leaf_area.unwrap(), px.average_leaf_area.unwrap() * s * s));
        assert!(close(cm.diameter.unwrap(), px.diameter.unwrap() * s));
        assert!(close(cm.perimeter.unwrap(), px.perimeter.unwrap() * s));
        assert_eq!(cm.compactness.unwrap().to_bits(), px.compactness.unwrap().to_bits());
        assert_eq!(cm.stockiness.unwrap().to_bits(), px.stockiness.unwrap().to_bits());
    }
}

#[cfg(test)]
mod run {
    #[test]
    fn analytic_square() {
        super::analytic_square()
    }
    #[test]
    fn rasterized_disk() {
        super::rasterized_disk()
    }
    #[test]
    fn scaling_law_over_random_mask_sets() {
        super::scaling_law_over_random_mask_sets()
    }
}
