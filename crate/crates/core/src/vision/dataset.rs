use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{TaskType, VisionError};
use crate::table::Table;

/// Expected training-data layout for a task, as text and as a schema.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetFormat {
    pub task: TaskType,
    pub instructions: String,
    pub layout: Value,
}

fn layout(task: TaskType) -> Value {
    match task {
        TaskType::Classification => json!({
            "kind": "folder_per_class",
            "images": "{root}/{class_name}/*.png|jpg",
            "alternative": {
                "kind": "labels_csv",
                "images": "{root}/images/*.png|jpg",
                "table": "{root}/labels.csv",
                "columns": {"file_name": "string", "label": "string"},
            },
        }),
        TaskType::Regression => json!({
            "kind": "values_csv",
            "images": "{root}/images/*.png|jpg",
            "table": "{root}/values.csv",
            "columns": {"file_name": "string", "value": "number"},
        }),
        TaskType::InstanceSegmentation => json!({
            "kind": "coco",
            "images": "{root}/images/*.png|jpg",
            "annotations": "{root}/annotations.json",
        }),
    }
}

fn render(task: TaskType, layout: &Value) -> String {
    let mut lines = vec![format!("Training data layout for {task}:")];
    let describe = |v: &Value, lines: &mut Vec<String>| {
        lines.push(format!(
            "- images: {}",
            v["images"].as_str().unwrap_or_default()
        ));
        if let Some(t) = v.get("table").and_then(Value::as_str) {
            let cols: Vec<String> = v["columns"]
                .as_object()
                .map(|m| {
                    m.iter()
                        .map(|(k, t)| format!("{k} ({})", t.as_str().unwrap_or("")))
                        .collect()
                })
                .unwrap_or_default();
            lines.push(format!("- table: {t} with columns {}", cols.join(", ")));
        }
        if let Some(a) = v.get("annotations").and_then(Value::as_str) {
            lines.push(format!(
                "- annotations: {a} in COCO instance-segmentation format"
            ));
        }
    };
    describe(layout, &mut lines);
    if let Some(alt) = layout.get("alternative") {
        lines.push("or, alternatively:".into());
        describe(alt, &mut lines);
    }
    lines.push("Every class or value needs at least one image; the split into training and validation subsets is done for you.".into());
    lines.join("\n")
}

pub fn get_dataset_format(task: &str) -> Result<DatasetFormat, VisionError> {
    let task: TaskType = task.parse()?;
    let layout = layout(task);
    Ok(DatasetFormat {
        task,
        instructions: render(task, &layout),
        layout,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub train: usize,
    pub val: usize,
}

/// A stratified train/validation partition, persisted as `{root}/split.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub task: TaskType,
    pub seed: u64,
    pub val_ratio: f64,
    /// Paths relative to the dataset root.
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub per_class: BTreeMap<String, ClassCounts>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SplitReport {
    pub fn load(root: &Path) -> Result<Self, VisionError> {
        let path = root.join("split.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|_| VisionError::NotPrepared(root.display().to_string()))?;
        serde_json::from_str(&text).map_err(|e| VisionError::Layout {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::path::PathBuf>, VisionError> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| VisionError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            !p.file_name()
                .map(|n| n.to_string_lossy().starts_with('.'))
                .unwrap_or(true)
        })
        .collect();
    v.sort();
    Ok(v)
}

/// Images referenced by a table, which must exist under `{root}/images`.
fn table_strata(
    root: &Path,
    table_name: &str,
    label_col: &str,
    numeric: bool,
) -> Result<BTreeMap<String, Vec<String>>, VisionError> {
    let table_path = root.join(table_name);
    let layout_err = |reason: String| VisionError::Layout {
        path: table_path.display().to_string(),
        reason,
    };
    let table = Table::read_csv(&table_path).map_err(|e| layout_err(e.to_string()))?;
    let fcol = table
        .column("file_name")
        .map_err(|e| layout_err(e.to_string()))?;
    let lcol = table
        .column(label_col)
        .map_err(|e| layout_err(e.to_string()))?;
    let mut strata: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, row) in table.rows.iter().enumerate() {
        let name = row.get(fcol).cloned().unwrap_or_default();
        let label = row.get(lcol).cloned().unwrap_or_default();
        if numeric
            && label
                .trim()
                .parse::<f64>()
                .map(|v| !v.is_finite())
                .unwrap_or(true)
        {
            return Err(layout_err(format!(
                "row {}: `{label}` is not a number",
                i + 1
            )));
        }
        if !numeric && label.trim().is_empty() {
            return Err(layout_err(format!("row {}: empty label", i + 1)));
        }
        let img = root.join("images").join(&name);
        if !img.is_file() {
            return Err(VisionError::Layout {
                path: img.display().to_string(),
                reason: "image listed in the table does not exist".into(),
            });
        }
        let key = if numeric { "all".to_string() } else { label };
        strata.entry(key).or_default().push(rel(root, &img));
    }
    Ok(strata)
}

fn strata_for(root: &Path, task: TaskType) -> Result<BTreeMap<String, Vec<String>>, VisionError> {
    match task {
        TaskType::Classification if root.join("labels.csv").is_file() => {
            table_strata(root, "labels.csv", "label", false)
        }
        TaskType::Classification => {
            let mut strata = BTreeMap::new();
            for entry in sorted_entries(root)? {
                if entry.is_dir() {
                    let class = entry.file_name().unwrap().to_string_lossy().into_owned();
                    let mut files = Vec::new();
                    for f in sorted_entries(&entry)? {
                        if f.is_file() && is_image(&f) {
                            files.push(rel(root, &f));
                        } else {
                            return Err(VisionError::Layout {
                                path: f.display().to_string(),
                                reason: "class folders may only contain .png/.jpg images".into(),
                            });
                        }
                    }
                    if files.is_empty() {
                        return Err(VisionError::EmptyClass(class));
                    }
                    strata.insert(class, files);
                } else if entry.file_name().is_some_and(|n| n != "split.json") {
                    return Err(VisionError::Layout {
                        path: entry.display().to_string(),
                        reason: "expected one folder per class at the dataset root".into(),
                    });
                }
            }
            if strata.is_empty() {
                return Err(VisionError::Layout {
                    path: root.display().to_string(),
                    reason: "no class folders found".into(),
                });
            }
            Ok(strata)
        }
        TaskType::Regression => table_strata(root, "values.csv", "value", true),
        TaskType::InstanceSegmentation => {
            let ann = root.join("annotations.json");
            if !ann.is_file() {
                return Err(VisionError::Layout {
                    path: ann.display().to_string(),
                    reason: "COCO annotations file is missing".into(),
                });
            }
            let files: Vec<String> = sorted_entries(&root.join("images"))?
                .into_iter()
                .filter(|p| p.is_file() && is_image(p))
                .map(|p| rel(root, &p))
                .collect();
            if files.is_empty() {
                return Err(VisionError::Layout {
                    path: root.join("images").display().to_string(),
                    reason: "no images".into(),
                });
            }
            Ok(BTreeMap::from([("all".to_string(), files)]))
        }
    }
}

/// Deterministic stratified split. Each stratum of `n` images sends
/// `min(round(n * val_ratio), n - 1)` to validation; single-image strata
/// stay in training with a warning.
pub fn prepare_dataset(
    root: &Path,
    task: TaskType,
    val_ratio: f64,
    seed: u64,
) -> Result<SplitReport, VisionError> {
    if !(0.0..1.0).contains(&val_ratio) {
        return Err(VisionError::Layout {
            path: root.display().to_string(),
            reason: format!("val_ratio must be in [0, 1), got {val_ratio}"),
        });
    }
    if !root.is_dir() {
        return Err(VisionError::MissingInput(root.display().to_string()));
    }
    let strata = strata_for(root, task)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SplitReport {
        task,
        seed,
        val_ratio,
        train: Vec::new(),
        val: Vec::new(),
        per_class: BTreeMap::new(),
        warnings: Vec::new(),
    };
    for (class, mut files) in strata {
        let n = files.len();
        if n == 1 {
            report.warnings.push(format!(
                "class `{class}` has a single image; it is used for training only"
            ));
        }
        let n_val = ((n as f64 * val_ratio).round() as usize).min(n.saturating_sub(1));
        files.shuffle(&mut rng);
        let (val, train) = files.split_at(n_val);
        report.per_class.insert(
            class,
            ClassCounts {
                train: train.len(),
                val: val.len(),
            },
        );
        report.train.extend_from_slice(train);
        report.val.extend_from_slice(val);
    }
    report.train.sort();
    report.val.sort();
    let path = root.join("split.json");
    let mut text = serde_json::to_string_pretty(&report).expect("split serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| VisionError::io(&path, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn class_tree(root: &Path, sizes: &[usize]) {
        for (c, &n) in sizes.iter().enumerate() {
            let dir = root.join(format!("class{c}"));
            std::fs::create_dir_all(&dir).unwrap();
            for i in 0..n {
                std::fs::write(dir.join(format!("img{i:03}.png")), b"x").unwrap();
            }
        }
    }

    #[test]
    fn format_text_tracks_schema() {
        let f = get_dataset_format("classification").unwrap();
        assert_eq!(f.layout["images"], "{root}/{class_name}/*.png|jpg");
        assert!(f.instructions.contains("{root}/{class_name}/*.png|jpg"));
        let r = get_dataset_format("regression").unwrap();
        assert_eq!(r.layout["columns"]["value"], "number");
        assert!(r.instructions.contains("value (number)"));
        assert!(matches!(
            get_dataset_format("detection"),
            Err(VisionError::UnknownTask(_))
        ));
    }

    #[test]
    fn hundred_images_four_classes() {
        let dir = tempfile::tempdir().unwrap();
        class_tree(dir.path(), &[25, 25, 25, 25]);
        let r = prepare_dataset(dir.path(), TaskType::Classification, 0.2, 7).unwrap();
        assert_eq!((r.train.len(), r.val.len()), (80, 20));
        for c in r.per_class.values() {
            assert_eq!((c.train, c.val), (20, 5));
        }
        let again = prepare_dataset(dir.path(), TaskType::Classification, 0.2, 7).unwrap();
        assert_eq!(r, again);
        assert!(dir.path().join("split.json").is_file());
    }

    #[test]
    fn singleton_class_goes_to_train() {
        let dir = tempfile::tempdir().unwrap();
        class_tree(dir.path(), &[1, 5]);
        let r = prepare_dataset(dir.path(), TaskType::Classification, 0.2, 1).unwrap();
        assert_eq!(r.per_class["class0"], ClassCounts { train: 1, val: 0 });
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn empty_class_and_stray_files_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        class_tree(dir.path(), &[3]);
        std::fs::create_dir_all(dir.path().join("empty")).unwrap();
        assert!(matches!(
            prepare_dataset(dir.path(), TaskType::Classification, 0.2, 1),
            Err(VisionError::EmptyClass(c)) if c == "empty"
        ));
        let dir = tempfile::tempdir().unwrap();
        class_tree(dir.path(), &[3]);
        std::fs::write(dir.path().join("class0/notes.txt"), b"x").unwrap();
        let err = prepare_dataset(dir.path(), TaskType::Classification, 0.2, 1).unwrap_err();
        assert!(err.to_string().contains("notes.txt"));
    }

    #[test]
    fn regression_requires_numeric_values() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        std::fs::write(dir.path().join("images/a.png"), b"x").unwrap();
        std::fs::write(
            dir.path().join("values.csv"),
            "file_name,value\na.png,abc\n",
        )
        .unwrap();
        assert!(matches!(
            prepare_dataset(dir.path(), TaskType::Regression, 0.2, 1),
            Err(VisionError::Layout { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn split_is_a_deterministic_partition(
            sizes in proptest::collection::vec(1usize..15, 1..5),
            ratio in 0.0f64..0.9,
            seed in any::<u64>(),
        ) {
            let dir = tempfile::tempdir().unwrap();
            class_tree(dir.path(), &sizes);
            let r = prepare_dataset(dir.path(), TaskType::Classification, ratio, seed).unwrap();
            let train: HashSet<_> = r.train.iter().collect();
            let val: HashSet<_> = r.val.iter().collect();
            prop_assert!(train.is_disjoint(&val));
            prop_assert_eq!(train.len() + val.len(), sizes.iter().sum::<usize>());
            for (c, &n) in sizes.iter().enumerate() {
                let counts = &r.per_class[&format!("class{c}")];
                let want = ((n as f64 * ratio).round() as usize).min(n - 1);
                prop_assert_eq!(counts.val, want);
                prop_assert_eq!(counts.train + counts.val, n);
            }
            let again = prepare_dataset(dir.path(), TaskType::Classification, ratio, seed).unwrap();
            prop_assert_eq!(r, again);
        }
    }
}
