//! The three task sets with their gold expectations.

use std::collections::BTreeSet;
use std::path::Path;

use serde_json::json;

use super::data::{mean_std, read_table, ARACROP_CSV, POTATO_CSV};
use super::grade::{AnalysisGold, Expected, GoldStep, GradeMode, Tolerance};
use super::ModelType;

pub const TOOL_SELECTION_PREAMBLE: &str =
    "Give the tools, with their arguments, in the order needed for the task below.";

pub const MODEL_SELECTION_PREAMBLE: &str = "For each plant phenotyping task listed below, say which kind of vision \
model I should train: instance segmentation, image classification, or image regression. \
Answer with one line per task in the form `<task>: <model type>`.";

#[derive(Debug, Clone)]
pub struct ToolSelectionTask {
    pub id: &'static str,
    pub prompt: String,
    pub gold: Vec<GoldStep>,
    pub mode: GradeMode,
}

fn ts(id: &'static str, body: &str, gold: Vec<GoldStep>) -> ToolSelectionTask {
    ToolSelectionTask {
        id,
        prompt: format!("{TOOL_SELECTION_PREAMBLE}\n{body}"),
        gold,
        mode: GradeMode::StrictOrder,
    }
}

pub fn tool_selection_tasks() -> Vec<ToolSelectionTask> {
    vec![
        ts(
            "ts-01",
            "./data/leaf_morphology.csv has 50 rows with file_name, leaf_diameter and leaf_weight. Drop rows \
             with missing values, regress leaf_weight on leaf_diameter, report the line and its R^2, and plot \
             the fit to ./results/leaf_length_vs_width.png.",
            vec![
                GoldStep::any_of(&["coding", "run_script"]),
                GoldStep::new("statistical_test")
                    .arg("test", json!("linear_fit"))
                    .arg("columns", json!(["leaf_diameter", "leaf_weight"])),
                GoldStep::new("visualise").arg("output_path", json!("./results/leaf_length_vs_width.png")),
            ],
        ),
        ts(
            "ts-02",
            "The replicate tables in ./data/exp_results/ share a sample_id column. Join them on sample_id, test \
             chlorophyll_content for differences between treatment groups with a one-way ANOVA, and write the \
             ANOVA table to ./results/anova_chlorophyll.csv.",
            vec![
                GoldStep::any_of(&["coding", "run_script"]),
                GoldStep::new("statistical_test")
                    .arg("test", json!("anova"))
                    .arg("output_path", json!("./results/anova_chlorophyll.csv")),
            ],
        ),
        ts(
            "ts-03",
            "Images of flowering plants are in ./images/flower_plants/ and ./data/flower_metadata.csv maps each \
             file_name to a bloom_status. Measure the plant area in every image, attach the areas to the \
             metadata, and save a boxplot of area per bloom_status to ./results/flower_area_boxplot.png.",
            vec![
                GoldStep::new("infer_instance_segmentation"),
                GoldStep::new("compute_phenotypes_from_ins_seg"),
                GoldStep::any_of(&["coding", "run_script"]),
                GoldStep::new("visualise").arg("output_path", json!("./results/flower_area_boxplot.png")),
            ],
        ),
        ts(
            "ts-04",
            "./data/wheat_metadata.json lists wheat images with file_name, variety and acquisition_date. Measure \
             spike count and spike length per image, join them to the metadata and save the table to \
             ./results/wheat_phenotypes.csv.",
            vec![
                GoldStep::new("infer_instance_segmentation").arg("file_path", json!("./data/wheat_metadata.json")),
                GoldStep::new("compute_phenotypes_from_ins_seg").optional(),
                GoldStep::any_of(&["coding", "run_script"]),
            ],
        ),
        ts(
            "ts-05",
            "Using ./results/wheat_phenotypes.csv, test whether spike count differs between wheat varieties with \
             a suitable test, and write the statistic and p-value to a text file.",
            vec![
                GoldStep::new("statistical_test")
                    .arg("csv_path", json!("./results/wheat_phenotypes.csv"))
                    .arg("test", json!("anova")),
                GoldStep::any_of(&["coding", "run_script"]).optional(),
            ],
        ),
        ts(
            "ts-06",
            "Wheat images come with ./data/wheat_metadata.csv (file_name, plant_id, date, treatment). Measure leaf \
             count and leaf area per image, join them to the metadata into ./results/wheat_growth_phenotypes.csv, \
             plot both traits per treatment, and describe what the plots show.",
            vec![
                GoldStep::new("infer_instance_segmentation").arg("file_path", json!("./data/wheat_metadata.csv")),
                GoldStep::new("compute_phenotypes_from_ins_seg"),
                GoldStep::any_of(&["coding", "run_script"]),
                GoldStep::new("visualise"),
                GoldStep::new("analyse_plot"),
            ],
        ),
        ts(
            "ts-07",
            "Predict a stress level for every image in ./data/stress_metadata.csv (file_name, manual_stress_level), \
             compare the predictions with the manual scores in a confusion matrix, and save the matrix plot to \
             ./results/stress_confusion_matrix.png.",
            vec![
                GoldStep::new("infer_classification").arg("file_path", json!("./data/stress_metadata.csv")),
                GoldStep::new("visualise").arg("output_path", json!("./results/stress_confusion_matrix.png")),
            ],
        ),
        ts(
            "ts-08",
            "From ./data/arabidopsis_phenotypes.csv, find the ecotype with the highest leaf count on day 26 and \
             draw a bar chart of each ecotype's maximum leaf count on that day.",
            vec![
                GoldStep::any_of(&["analyse_table", "coding"]),
                GoldStep::new("visualise"),
            ],
        ),
        ts(
            "ts-09",
            "./data/field_observations.csv holds field phenotyping records. Keep the records whose disease_symptom \
             attribute is true and plot how often each symptom type occurs.",
            vec![
                GoldStep::any_of(&["coding", "analyse_table"]),
                GoldStep::new("visualise"),
            ],
        ),
        ts(
            "ts-10",
            "Maize root images are in ./data/maize_roots/ with ./data/maize_metadata.csv (file_name, plant_id, \
             yield). Measure total root length per image and report its correlation with yield.",
            vec![
                GoldStep::new("infer_instance_segmentation"),
                GoldStep::new("compute_phenotypes_from_ins_seg").optional(),
                GoldStep::any_of(&["coding", "run_script"]),
                GoldStep::new("statistical_test")
                    .arg("test", json!("pearson"))
                    .arg("columns", json!(["yield"])),
            ],
        ),
    ]
}

#[derive(Debug, Clone)]
pub struct ModelSelectionTask {
    pub id: String,
    pub name: &'static str,
    pub admissible: BTreeSet<ModelType>,
}

/// Task names with admissible model types: counting admits segmentation or
/// regression, continuous estimation admits regression, categorical
/// judgements admit classification, object localisation admits segmentation.
const MODEL_TASKS: [(&str, &str); 50] = [
    ("Leaf counting", "sr"),
    ("Disease detection (healthy or diseased)", "c"),
    ("Leaf area estimation", "r"),
    ("Plant species identification", "c"),
    ("Flower counting", "sr"),
    ("Fruit counting", "sr"),
    ("Root tip detection", "s"),
    ("Leaf shape classification", "c"),
    ("Plant height estimation", "r"),
    ("Growth stage classification (vegetative or flowering)", "c"),
    ("Plant biomass estimation", "r"),
    ("Nutrient deficiency detection", "c"),
    ("Leaf angle measurement", "r"),
    ("Weed detection in field images", "s"),
    ("Stem counting in multi-stem plants", "sr"),
    ("Disease severity classification (mild, moderate or severe)", "c"),
    ("Fruit size estimation", "r"),
    ("Flower color classification", "c"),
    ("Plant stress detection (biotic or abiotic)", "c"),
    ("Herbivory damage estimation (eaten leaf area)", "r"),
    ("Root length estimation", "r"),
    ("Seed type classification", "c"),
    ("Flower shape classification", "c"),
    ("Seedling emergence detection", "cs"),
    ("Leaf color classification", "c"),
    ("Tiller counting in cereals", "sr"),
    ("Pod counting in legumes", "sr"),
    ("Fruit ripening stage classification", "c"),
    ("Berry maturity score", "rc"),
    ("Crop row detection", "s"),
    ("Leaf chlorophyll content estimation", "r"),
    ("Fruit color classification (ripe or unripe)", "c"),
    ("Root nodule counting", "sr"),
    ("Plant lodging detection", "c"),
    ("Flower disease severity on a continuous scale", "r"),
    ("Leaf disease segmentation (affected area)", "s"),
    ("Root hair detection", "s"),
    ("Photosynthetic efficiency estimation", "r"),
    ("Plant stress scoring (stressed or healthy)", "c"),
    ("Fruit cracking severity assessment", "rc"),
    ("Pod maturity classification", "c"),
    ("Bud counting", "sr"),
    ("Insect pest damage classification on leaves", "c"),
    ("Plant density estimation", "rs"),
    ("Root branching pattern classification", "c"),
    ("Plant vigor scoring", "r"),
    ("Thrips damage classification on flowers", "c"),
    ("Leaf margin shape classification", "c"),
    ("Vine length estimation", "r"),
    ("Grape cluster counting", "sr"),
];

fn types(code: &str) -> BTreeSet<ModelType> {
    code.chars()
        .map(|c| match c {
            's' => ModelType::InstanceSegmentation,
            'c' => ModelType::Classification,
            'r' => ModelType::Regression,
            other => unreachable!("type code {other}"),
        })
        .collect()
}

pub fn model_selection_tasks() -> Vec<ModelSelectionTask> {
    MODEL_TASKS
        .iter()
        .enumerate()
        .map(|(i, (name, code))| ModelSelectionTask {
            id: format!("ms-{:02}", i + 1),
            name,
            admissible: types(code),
        })
        .collect()
}

pub fn model_selection_prompt() -> String {
    let mut p = format!("{MODEL_SELECTION_PREAMBLE}\n\n");
    for (name, _) in MODEL_TASKS {
        p.push_str(name);
        p.push('\n');
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisKind {
    Values,
    Plot,
}

#[derive(Debug, Clone)]
pub struct DataAnalysisTask {
    pub id: &'static str,
    pub prompt: String,
    pub kind: AnalysisKind,
    pub data: &'static str,
    /// PNG the task must produce.
    pub plot: Option<&'static str>,
}

fn da(id: &'static str, data: &'static str, prompt: String, plot: Option<&'static str>) -> DataAnalysisTask {
    DataAnalysisTask {
        id,
        prompt,
        kind: if plot.is_some() { AnalysisKind::Plot } else { AnalysisKind::Values },
        data,
        plot,
    }
}

pub fn data_analysis_tasks() -> Vec<DataAnalysisTask> {
    let (a, p) = (ARACROP_CSV, POTATO_CSV);
    vec![
        da("da-01", a, format!("Using {a}, which plant has the highest leaf count on day 26, and what is that count?"), None),
        da("da-02", a, format!("Using {a}, which plant has the lowest leaf count on day 1, and what is that count?"), None),
        da("da-03", p, format!("Using {p}, report the largest manually measured dried weight among Voyager plants and the file name of that plant."), None),
        da("da-04", p, format!("Using {p}, report the smallest manually measured dried weight among Voyager plants and the file name of that plant."), None),
        da("da-05", a, format!("Using {a}, give the mean and the standard deviation of projected leaf area over ein2 plants on day 26."), None),
        da("da-06", p, format!("Using {p}, give the mean and the standard deviation of the manually measured leaf area of the Desiree plants."), None),
        da("da-07", a, format!("Using {a}, draw leaf count against day for plant 1 and save the figure to ./results_for_eval/task7.png."), Some("./results_for_eval/task7.png")),
        da("da-08", a, format!("Using {a}, draw a bar chart of the day-26 leaf count of every plant and save it to ./results_for_eval/task8.png."), Some("./results_for_eval/task8.png")),
        da("da-09", p, format!("Using {p}, draw a bar chart of the manually measured dried weight of every plant and save it to ./results_for_eval/task9.png."), Some("./results_for_eval/task9.png")),
        da("da-10", p, format!("Using {p}, draw a histogram of the manually measured leaf area over all plants and save it to ./results_for_eval/task10.png."), Some("./results_for_eval/task10.png")),
    ]
}

fn num(row: &std::collections::HashMap<String, String>, col: &str) -> f64 {
    row[col].parse().unwrap_or(f64::NAN)
}

fn count(label: &str, v: f64) -> Expected {
    Expected::Number { label: label.into(), value: v, tolerance: Tolerance::Exact }
}

fn stat(label: &str, v: f64) -> Expected {
    Expected::Number { label: label.into(), value: v, tolerance: Tolerance::STATISTIC }
}

/// Reference answer by a direct scan of the table under `root`.
pub fn analysis_gold(task: &DataAnalysisTask, root: &Path) -> std::io::Result<AnalysisGold> {
    if let Some(path) = task.plot {
        return Ok(AnalysisGold::Plot { path: path.to_owned() });
    }
    let rows = read_table(&root.join(task.data))?;
    let pick = |filter: &dyn Fn(&std::collections::HashMap<String, String>) -> bool,
                col: &str,
                max: bool| {
        rows.iter()
            .filter(|r| filter(r))
            .fold(None::<&std::collections::HashMap<String, String>>, |best, r| match best {
                Some(b) if (max && num(b, col) >= num(r, col)) || (!max && num(b, col) <= num(r, col)) => Some(b),
                _ => Some(r),
            })
            .expect("rows match the filter")
    };
    let expected = match task.id {
        "da-01" | "da-02" => {
            let (day, max, label) = if task.id == "da-01" { ("26", true, "max_leaf_count") } else { ("1", false, "min_leaf_count") };
            let r = pick(&|r| r["days_after_sowing"] == day, "leaf_count", max);
            vec![count(label, num(r, "leaf_count")), count("plant_id", num(r, "plant_id"))]
        }
        "da-03" | "da-04" => {
            let (max, label) = if task.id == "da-03" { (true, "max_dried_weight") } else { (false, "min_dried_weight") };
            let r = pick(&|r| r["variety"] == "Voyager", "manual_dried_weight_g", max);
            vec![
                stat(label, num(r, "manual_dried_weight_g")),
                Expected::Text { label: "file_name".into(), value: r["file_name"].clone() },
            ]
        }
        "da-05" | "da-06" => {
            let values: Vec<f64> = if task.id == "da-05" {
                rows.iter()
                    .filter(|r| r["ecotype"] == "ein2" && r["days_after_sowing"] == "26")
                    .map(|r| num(r, "projected_leaf_area"))
                    .collect()
            } else {
                rows.iter()
                    .filter(|r| r["variety"] == "Desiree")
                    .map(|r| num(r, "manual_leaf_area_cm2"))
                    .collect()
            };
            let (m, s) = mean_std(&values);
            vec![stat("mean", m), stat("std", s)]
        }
        other => unreachable!("no value gold for {other}"),
    };
    Ok(AnalysisGold::Values { expected })
}
