//! Synthetic tables for the data-analysis suite and the brute-force
//! reference answers computed from them.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::PHENOTYPE_COLUMNS;

pub const ARACROP_CSV: &str = "./data_for_eval/aracrop_phenotypes.csv";
pub const POTATO_CSV: &str = "./data_for_eval/potato_metadata.csv";
pub const ARACROP_DAYS: [u32; 6] = [1, 6, 11, 16, 21, 26];
pub const ARACROP_PLANTS: u32 = 24;
pub const ECOTYPES: [&str; 3] = ["Col-0", "ctr1", "ein2"];
pub const POTATO_PLANTS: u32 = 30;
pub const VARIETIES: [&str; 3] = ["Voyager", "Desiree", "Rooster"];

#[derive(Debug, Clone, PartialEq)]
pub struct AraRow {
    pub file_name: String,
    pub plant_id: u32,
    pub ecotype: String,
    pub day: u32,
    pub leaf_count: u32,
    pub projected_leaf_area: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotatoRow {
    pub file_name: String,
    pub plant_id: u32,
    pub variety: String,
    pub dried_weight: f64,
    pub leaf_area: f64,
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

fn make_unique_extreme(counts: &mut [u32], idx: &[usize], max: bool) {
    let pick = |c: &[u32]| -> Vec<usize> {
        let vals = idx.iter().map(|&i| c[i]);
        let target = if max { vals.max() } else { vals.min() }.expect("rows");
        idx.iter().copied().filter(|&i| c[i] == target).collect()
    };
    let ties = pick(counts);
    if ties.len() > 1 {
        if max {
            counts[ties[0]] += 1;
        } else {
            counts[ties[0]] -= 1;
        }
    }
}

/// Arabidopsis time series with a unique day-26 maximum and day-1 minimum
/// leaf count.
pub fn aracrop_rows() -> Vec<AraRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let mut rows = Vec::new();
    for plant in 1..=ARACROP_PLANTS {
        let vigour: f64 = rng.gen_range(0.8..1.2);
        for &day in &ARACROP_DAYS {
            let leaves = (3.0 + 0.5 * f64::from(day) * vigour + rng.gen_range(-1.0..1.0)).round().max(3.0);
            let area = round_to(0.015 * f64::from(day).powf(1.7) * vigour + rng.gen_range(0.0..0.05), 4);
            rows.push(AraRow {
                file_name: format!("plant{plant:02}_day{day:02}.png"),
                plant_id: plant,
                ecotype: ECOTYPES[((plant - 1) % 3) as usize].to_owned(),
                day,
                leaf_count: leaves as u32,
                projected_leaf_area: area,
            });
        }
    }
    let mut counts: Vec<u32> = rows.iter().map(|r| r.leaf_count).collect();
    let last: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].day == 26).collect();
    let first: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].day == 1).collect();
    make_unique_extreme(&mut counts, &last, true);
    make_unique_extreme(&mut counts, &first, false);
    for (r, c) in rows.iter_mut().zip(counts) {
        r.leaf_count = c;
    }
    rows
}

pub fn potato_rows() -> Vec<PotatoRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(1845);
    (1..=POTATO_PLANTS)
        .map(|plant| {
            let variety = VARIETIES[((plant - 1) % 3) as usize];
            let base = match variety {
                "Voyager" => 11.0,
                "Desiree" => 9.0,
                _ => 10.0,
            };
            PotatoRow {
                file_name: format!("potato_{plant:03}.png"),
                plant_id: plant,
                variety: variety.to_owned(),
                dried_weight: round_to(base + rng.gen_range(-2.5..2.5), 3),
                leaf_area: round_to(base * 40.0 + rng.gen_range(-60.0..60.0), 2),
            }
        })
        .collect()
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()
}

/// Writes both tables below `root`.
pub fn write_eval_data(root: &Path) -> std::io::Result<()> {
    let mut header: Vec<&str> = PHENOTYPE_COLUMNS.to_vec();
    header.extend(["plant_id", "ecotype", "days_after_sowing"]);
    let ara = aracrop_rows();
    write_csv(
        &root.join(ARACROP_CSV),
        &header,
        ara.iter().map(|r| {
            let n = f64::from(r.leaf_count);
            let diameter = round_to(2.2 * r.projected_leaf_area.sqrt(), 4);
            let perimeter = round_to(5.0 * diameter, 4);
            let compactness = round_to((0.55 + 0.01 * n).min(0.95), 4);
            let stockiness = round_to(4.0 * std::f64::consts::PI * r.projected_leaf_area / (perimeter * perimeter), 4);
            vec![
                r.file_name.clone(),
                r.leaf_count.to_string(),
                round_to(r.projected_leaf_area / n, 4).to_string(),
                r.projected_leaf_area.to_string(),
                diameter.to_string(),
                perimeter.to_string(),
                compactness.to_string(),
                stockiness.to_string(),
                r.plant_id.to_string(),
                r.ecotype.clone(),
                r.day.to_string(),
            ]
        }),
    )?;
    write_csv(
        &root.join(POTATO_CSV),
        &["file_name", "plant_id", "variety", "manual_dried_weight_g", "manual_leaf_area_cm2"],
        potato_rows().into_iter().map(|r| {
            vec![
                r.file_name,
                r.plant_id.to_string(),
                r.variety,
                r.dried_weight.to_string(),
                r.leaf_area.to_string(),
            ]
        }),
    )
}

/// Mean and sample standard deviation (n - 1).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Rows of a written table, read back as strings keyed by header.
pub fn read_table(path: &Path) -> std::io::Result<Vec<std::collections::HashMap<String, String>>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(headers.iter().map(str::to_owned).zip(rec.iter().map(str::to_owned)).collect())
        })
        .collect()
}
