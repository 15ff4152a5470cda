use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::coco::{InstanceMask, SegmentationSet};
use super::hull::{convex_hull, hull_diameter, ring_perimeter, rings_disjoint, signed_area, Point};
use super::raster::{outline, rasterize_polygons, Bitmap};
use super::GeometryError;
use crate::numfmt::format_sig;
use crate::table::Table;

pub const PHENOTYPE_COLUMNS: [&str; 8] = [
    "file_name",
    "leaf_count",
    "average_leaf_area",
    "projected_leaf_area",
    "diameter",
    "perimeter",
    "compactness",
    "stockiness",
];

/// Centimetres per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactor(f64);

impl ScaleFactor {
    pub const PIXELS: ScaleFactor = ScaleFactor(1.0);

    pub fn new(pixel_to_cm: f64) -> Result<Self, GeometryError> {
        if pixel_to_cm.is_finite() && pixel_to_cm > 0.0 {
            Ok(Self(pixel_to_cm))
        } else {
            Err(GeometryError::InvalidScale(pixel_to_cm))
        }
    }

    pub fn pixel_to_cm(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurePath {
    Analytic,
    Raster,
}

/// Per-image traits. Shape traits are `None` for images without instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeRecord {
    pub file_name: String,
    pub leaf_count: usize,
    pub average_leaf_area: Option<f64>,
    pub projected_leaf_area: f64,
    pub diameter: Option<f64>,
    pub perimeter: Option<f64>,
    pub compactness: Option<f64>,
    pub stockiness: Option<f64>,
    #[serde(skip)]
    pub path: Option<MeasurePath>,
}

/// Unscaled pixel-space measurements of one plant.
struct PixelTraits {
    instance_areas: Vec<f64>,
    union_area: f64,
    diameter: f64,
    perimeter: f64,
    compactness: f64,
    stockiness: f64,
    path: MeasurePath,
}

fn shape_ratios(area: f64, hull_area: f64, perimeter: f64, degenerate: bool) -> (f64, f64) {
    if degenerate || perimeter <= 0.0 {
        let compactness = if hull_area > 0.0 {
            (area / hull_area).min(1.0)
        } else {
            1.0
        };
        return (compactness, 0.0);
    }
    let compactness = if hull_area > 0.0 {
        area / hull_area
    } else {
        1.0
    };
    (compactness, 4.0 * PI * area / (perimeter * perimeter))
}

fn all_rings_disjoint(rings: &[&Vec<Point>]) -> bool {
    for i in 0..rings.len() {
        for j in i + 1..rings.len() {
            if !rings_disjoint(rings[i], rings[j]) {
                return false;
            }
        }
    }
    true
}

fn measure_analytic(per_instance: &[&Vec<Vec<Point>>]) -> PixelTraits {
    let instance_areas: Vec<f64> = per_instance
        .iter()
        .map(|rings| rings.iter().map(|r| signed_area(r).abs()).sum())
        .collect();
    let union_area: f64 = instance_areas.iter().sum();
    let vertices: Vec<Point> = per_instance
        .iter()
        .flat_map(|rings| rings.iter().flatten().copied())
        .collect();
    let hull = convex_hull(&vertices);
    let perimeter: f64 = per_instance
        .iter()
        .flat_map(|rings| rings.iter())
        .map(|r| ring_perimeter(r))
        .sum();
    let (compactness, stockiness) =
        shape_ratios(union_area, signed_area(&hull).abs(), perimeter, false);
    PixelTraits {
        instance_areas,
        union_area,
        diameter: hull_diameter(&hull),
        perimeter,
        compactness,
        stockiness,
        path: MeasurePath::Analytic,
    }
}

fn measure_raster(masks: &[Bitmap]) -> PixelTraits {
    let mut union = Bitmap::new(masks[0].width(), masks[0].height());
    for m in masks {
        union.union_with(m);
    }
    let instance_areas = masks.iter().map(|m| m.count() as f64).collect();
    let union_area = union.count() as f64;
    let shape = outline(&union);
    let degenerate = shape.boundary_centres.len() <= 2;
    let diameter = hull_diameter(&convex_hull(&shape.boundary_centres));
    let hull_area = signed_area(&convex_hull(&shape.boundary_corners)).abs();
    let perimeter = if degenerate { 0.0 } else { shape.perimeter };
    let (compactness, stockiness) = shape_ratios(union_area, hull_area, perimeter, degenerate);
    PixelTraits {
        instance_areas,
        union_area,
        diameter,
        perimeter,
        compactness,
        stockiness,
        path: MeasurePath::Raster,
    }
}

fn measure(seg: &SegmentationSet, image_id: u64, width: u32, height: u32) -> Option<PixelTraits> {
    let instances = seg.instances_of(image_id);
    if instances.is_empty() {
        return None;
    }
    let polygons: Option<Vec<&Vec<Vec<Point>>>> = instances
        .iter()
        .map(|i| match &i.mask {
            InstanceMask::Polygons(rings) => Some(rings),
            InstanceMask::Raster(_) => None,
        })
        .collect();
    if let Some(polys) = &polygons {
        let rings: Vec<&Vec<Point>> = polys.iter().flat_map(|r| r.iter()).collect();
        if all_rings_disjoint(&rings) {
            return Some(measure_analytic(polys));
        }
    }
    let masks: Vec<Bitmap> = instances
        .iter()
        .map(|i| match &i.mask {
            InstanceMask::Polygons(rings) => rasterize_polygons(rings, width, height),
            InstanceMask::Raster(bm) => bm.clone(),
        })
        .collect();
    Some(measure_raster(&masks))
}

/// Traits of one image, in pixel units scaled by `scale`.
pub fn compute_image(
    seg: &SegmentationSet,
    image_id: u64,
    scale: ScaleFactor,
) -> Option<PhenotypeRecord> {
    let img = seg.images.iter().find(|i| i.id == image_id)?;
    let s = scale.pixel_to_cm();
    let s2 = s * s;
    let Some(t) = measure(seg, img.id, img.width, img.height) else {
        return Some(PhenotypeRecord {
            file_name: img.file_name.clone(),
            leaf_count: 0,
            average_leaf_area: None,
            projected_leaf_area: 0.0,
            diameter: None,
            perimeter: None,
            compactness: None,
            stockiness: None,
            path: None,
        });
    };
    let n = t.instance_areas.len();
    let mean_area = t.instance_areas.iter().sum::<f64>() / n as f64;
    Some(PhenotypeRecord {
        file_name: img.file_name.clone(),
        leaf_count: n,
        average_leaf_area: Some(mean_area * s2),
        projected_leaf_area: t.union_area * s2,
        diameter: Some(t.diameter * s),
        perimeter: Some(t.perimeter * s),
        compactness: Some(t.compactness),
        stockiness: Some(t.stockiness),
        path: Some(t.path),
    })
}

/// One record per image, ordered by file name.
pub fn compute_phenotypes(seg: &SegmentationSet, scale: ScaleFactor) -> Vec<PhenotypeRecord> {
    let mut out: Vec<PhenotypeRecord> = seg
        .images
        .iter()
        .filter_map(|img| compute_image(seg, img.id, scale))
        .collect();
    out.sort_by(|a, b| a.file_name.cmp(&b.file_name));
    out
}

fn cell(v: Option<f64>) -> String {
    v.map(format_sig).unwrap_or_default()
}

pub fn phenotypes_to_table(records: &[PhenotypeRecord]) -> Table {
    let mut table = Table::new(PHENOTYPE_COLUMNS.iter().map(|s| s.to_string()).collect());
    for r in records {
        table.rows.push(vec![
            r.file_name.clone(),
            r.leaf_count.to_string(),
            cell(r.average_leaf_area),
            format_sig(r.projected_leaf_area),
            cell(r.diameter),
            cell(r.perimeter),
            cell(r.compactness),
            cell(r.stockiness),
        ]);
    }
    table
}

pub fn write_phenotypes_csv(
    records: &[PhenotypeRecord],
    path: impl AsRef<Path>,
) -> Result<(), GeometryError> {
    phenotypes_to_table(records).write_csv(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::coco::{
        encode_rle, from_coco, CocoAnnotation, CocoFile, CocoImage, Segmentation,
    };
    use proptest::prelude::*;

    fn poly_ann(image_id: u64, ring: &[[f64; 2]]) -> CocoAnnotation {
        CocoAnnotation {
            id: None,
            image_id,
            category_id: 1,
            segmentation: Segmentation::Polygons(vec![ring
                .iter()
                .flat_map(|p| [p[0], p[1]])
                .collect()]),
            score: None,
            area: None,
            bbox: None,
        }
    }

    fn set(w: u32, h: u32, anns: Vec<CocoAnnotation>) -> SegmentationSet {
        from_coco(CocoFile {
            images: vec![CocoImage {
                id: 1,
                file_name: "plant.png".into(),
                width: w,
                height: h,
            }],
            annotations: anns,
            categories: vec![],
        })
        .unwrap()
    }

    fn square(x: f64, y: f64, side: f64) -> Vec<[f64; 2]> {
        vec![[x, y], [x + side, y], [x + side, y + side], [x, y + side]]
    }

    #[test]
    fn square_polygon_is_exact() {
        let seg = set(200, 200, vec![poly_ann(1, &square(10.0, 10.0, 100.0))]);
        let r = &compute_phenotypes(&seg, ScaleFactor::PIXELS)[0];
        assert_eq!(r.leaf_count, 1);
        assert_eq!(r.projected_leaf_area, 10000.0);
        assert_eq!(r.average_leaf_area, Some(10000.0));
        assert!((r.diameter.unwrap() - 100.0 * 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(r.perimeter, Some(400.0));
        assert!((r.compactness.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.stockiness.unwrap() - PI / 4.0).abs() < 1e-12);
        assert_eq!(r.path, Some(MeasurePath::Analytic));
    }

    #[test]
    fn square_polygon_scaled() {
        let seg = set(200, 200, vec![poly_ann(1, &square(10.0, 10.0, 100.0))]);
        let r = &compute_phenotypes(&seg, ScaleFactor::new(0.03).unwrap())[0];
        assert!((r.projected_leaf_area - 9.0).abs() < 1e-9);
        assert!((r.diameter.unwrap() - 4.242640687).abs() < 1e-6);
        assert!((r.perimeter.unwrap() - 12.0).abs() < 1e-9);
        assert!((r.stockiness.unwrap() - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn two_disjoint_unit_squares() {
        let seg = set(
            10,
            10,
            vec![
                poly_ann(1, &square(1.0, 1.0, 1.0)),
                poly_ann(1, &square(5.0, 5.0, 1.0)),
            ],
        );
        let r = &compute_phenotypes(&seg, ScaleFactor::PIXELS)[0];
        assert_eq!(r.leaf_count, 2);
        assert_eq!(r.projected_leaf_area, 2.0);
        assert_eq!(r.average_leaf_area, Some(1.0));
    }

    #[test]
    fn overlapping_squares_do_not_double_count() {
        let seg = set(
            40,
            40,
            vec![
                poly_ann(1, &square(0.0, 0.0, 20.0)),
                poly_ann(1, &square(10.0, 10.0, 20.0)),
            ],
        );
        let r = &compute_phenotypes(&seg, ScaleFactor::PIXELS)[0];
        assert_eq!(r.path, Some(MeasurePath::Raster));
        assert_eq!(r.projected_leaf_area, 700.0);
        assert_eq!(r.average_leaf_area, Some(400.0));
        assert!(r.compactness.unwrap() <= 1.0);
    }

    #[test]
    fn empty_image_has_null_shape_traits() {
        let seg = set(10, 10, vec![]);
        let r = &compute_phenotypes(&seg, ScaleFactor::PIXELS)[0];
        assert_eq!(r.leaf_count, 0);
        assert_eq!(r.projected_leaf_area, 0.0);
        assert!(r.diameter.is_none() && r.stockiness.is_none());
        let t = phenotypes_to_table(std::slice::from_ref(r));
        assert_eq!(t.rows[0], ["plant.png", "0", "", "0", "", "", "", ""]);
    }

    #[test]
    fn single_pixel_plant_is_degenerate() {
        let mut bm = Bitmap::new(5, 5);
        bm.set(2, 2, true);
        let ann = CocoAnnotation {
            id: None,
            image_id: 1,
            category_id: 1,
            segmentation: Segmentation::Rle(encode_rle(&bm)),
            score: None,
            area: None,
            bbox: None,
        };
        let r = &compute_phenotypes(&set(5, 5, vec![ann]), ScaleFactor::PIXELS)[0];
        assert_eq!(r.diameter, Some(0.0));
        assert_eq!(r.perimeter, Some(0.0));
        assert_eq!(r.stockiness, Some(0.0));
        assert_eq!(r.compactness, Some(1.0));
    }

    #[test]
    fn invalid_scale_rejected() {
        assert!(ScaleFactor::new(0.0).is_err());
        assert!(ScaleFactor::new(-1.0).is_err());
        assert!(ScaleFactor::new(f64::NAN).is_err());
    }

    #[test]
    fn stockiness_orders_disk_square_rectangle() {
        let disk: Vec<[f64; 2]> = (0..256)
            .map(|i| {
                let a = i as f64 / 256.0 * 2.0 * PI;
                [100.0 + 50.0 * a.cos(), 100.0 + 50.0 * a.sin()]
            })
            .collect();
        let get = |ring: &[[f64; 2]]| {
            compute_phenotypes(&set(200, 200, vec![poly_ann(1, ring)]), ScaleFactor::PIXELS)[0]
                .stockiness
                .unwrap()
        };
        let rect = vec![[0.0, 0.0], [80.0, 0.0], [80.0, 20.0], [0.0, 20.0]];
        let (d, s, r) = (get(&disk), get(&square(0.0, 0.0, 50.0)), get(&rect));
        assert!(d > s && s > r, "{d} {s} {r}");
    }

    proptest! {
        #[test]
        fn translation_and_rotation_invariance(
            x in 0.0f64..50.0, y in 0.0f64..50.0, w in 1.0f64..40.0, h in 1.0f64..40.0,
            dx in 0.0f64..50.0, dy in 0.0f64..50.0,
        ) {
            let tri = vec![[x, y], [x + w, y], [x + w / 3.0, y + h]];
            let moved: Vec<[f64; 2]> = tri.iter().map(|p| [p[0] + dx, p[1] + dy]).collect();
            // Rotation by 90 degrees about the origin, then shifted back into the frame.
            let rotated: Vec<[f64; 2]> = tri.iter().map(|p| [150.0 - p[1], p[0]]).collect();
            let base = compute_phenotypes(&set(160, 160, vec![poly_ann(1, &tri)]), ScaleFactor::PIXELS);
            for other in [moved, rotated] {
                let r = compute_phenotypes(&set(160, 160, vec![poly_ann(1, &other)]), ScaleFactor::PIXELS);
                let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(1.0);
                prop_assert!(close(base[0].projected_leaf_area, r[0].projected_leaf_area));
                prop_assert!(close(base[0].diameter.unwrap(), r[0].diameter.unwrap()));
                prop_assert!(close(base[0].perimeter.unwrap(), r[0].perimeter.unwrap()));
                prop_assert!(close(base[0].compactness.unwrap(), r[0].compactness.unwrap()));
                prop_assert!(close(base[0].stockiness.unwrap(), r[0].stockiness.unwrap()));
            }
        }

        #[test]
        fn compactness_never_exceeds_one(
            cells in proptest::collection::vec((0u32..30, 0u32..30), 1..120)
        ) {
            let mut bm = Bitmap::new(30, 30);
            for (x, y) in cells { bm.set(x, y, true); }
            let ann = CocoAnnotation {
                id: None, image_id: 1, category_id: 1,
                segmentation: Segmentation::Rle(encode_rle(&bm)),
                score: None, area: None, bbox: None,
            };
            let r = &compute_phenotypes(&set(30, 30, vec![ann]), ScaleFactor::PIXELS)[0];
            prop_assert!(r.compactness.unwrap() <= 1.0 + 1e-9);
            prop_assert!(r.stockiness.unwrap() >= 0.0);
            prop_assert_eq!(r.projected_leaf_area, bm.count() as f64);
        }
    }
}
