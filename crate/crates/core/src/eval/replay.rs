//! Recorded model turns for offline suite runs.
//!
//! Tool-selection fixtures make three deliberate mistakes (an extra tool,
//! a misordered step, a wrong column) and the model-selection fixture one
//! wrong type, so the graders are exercised on both verdicts.

use serde_json::{json, Value};

use super::tasks::{model_selection_tasks, AnalysisKind, DataAnalysisTask};
use crate::llm::{AssistantTurn, FinishReason, ToolCallRequest};

/// What the stubbed `get_model_zoo` reports during tool selection.
pub const SYNTHETIC_ZOO: [&str; 4] = [
    "arabidopsis_leaf-instance-segmentation_cvppp2017-a1a4_m2fb_fullft",
    "wheat_spike-instance-segmentation_gwhd_m2fb",
    "plant_stress-classification_vit",
    "maize_root-instance-segmentation_m2fb",
];

fn calls(text: &str, list: Vec<(&str, Value)>) -> AssistantTurn {
    AssistantTurn {
        text: Some(text.to_owned()),
        tool_calls: list
            .into_iter()
            .enumerate()
            .map(|(i, (name, args))| ToolCallRequest::new(&format!("call_{}", i + 1), name, args))
            .collect(),
        finish: FinishReason::ToolCalls,
    }
}

fn done(text: &str) -> AssistantTurn {
    AssistantTurn::text(format!("{text}\nTERMINATE"))
}

fn code(msg: &str) -> Value {
    json!({"message": msg})
}

fn tool_selection_plan(id: &str) -> (&'static str, Vec<(&'static str, Value)>) {
    match id {
        "ts-01" => (
            "Clean the table, fit the regression, then plot it.",
            vec![
                ("coding", code("Drop rows with missing values from ./data/leaf_morphology.csv and save ./results/leaf_clean.csv.")),
                ("statistical_test", json!({"csv_path": "./results/leaf_clean.csv", "test": "linear_fit", "columns": ["leaf_diameter", "leaf_weight"]})),
                ("visualise", json!({"goal": "Scatter of leaf_weight against leaf_diameter with the fitted line", "data_paths": ["./results/leaf_clean.csv"], "output_path": "./results/leaf_length_vs_width.png"})),
            ],
        ),
        "ts-02" => (
            "Join the replicates, then run the ANOVA.",
            vec![
                ("coding", code("Merge every CSV in ./data/exp_results/ on sample_id into ./results/merged.csv.")),
                ("statistical_test", json!({"csv_path": "./results/merged.csv", "test": "anova", "columns": ["treatment", "chlorophyll_content"], "output_path": "./results/anova_chlorophyll.csv"})),
            ],
        ),
        // Classifies instead of segmenting: an unexpected tool.
        "ts-03" => (
            "Classify the images, merge with the metadata and draw the boxplot.",
            vec![
                ("infer_classification", json!({"file_path": "./data/flower_metadata.csv", "checkpoint": "plant_stress-classification_vit", "output_path": "./results/flower_classes.csv"})),
                ("compute_phenotypes_from_ins_seg", json!({"ins_seg_result_path": "./results/flower/ins_seg_results.json", "save_path": "./results/flower_traits.csv"})),
                ("coding", code("Join ./results/flower_traits.csv with ./data/flower_metadata.csv on file_name into ./results/flower_merged.csv.")),
                ("visualise", json!({"goal": "Boxplot of projected_leaf_area per bloom_status", "data_paths": ["./results/flower_merged.csv"], "output_path": "./results/flower_area_boxplot.png"})),
            ],
        ),
        "ts-04" => (
            "Segment the spikes, compute traits, join with the metadata.",
            vec![
                ("get_model_zoo", json!({})),
                ("infer_instance_segmentation", json!({"file_path": "./data/wheat_metadata.json", "checkpoint": "wheat_spike-instance-segmentation_gwhd_m2fb", "output_dir": "./results/wheat"})),
                ("compute_phenotypes_from_ins_seg", json!({"ins_seg_result_path": "./results/wheat/ins_seg_results.json", "save_path": "./results/wheat_traits.csv"})),
                ("coding", code("Join ./results/wheat_traits.csv with ./data/wheat_metadata.json on file_name into ./results/wheat_phenotypes.csv.")),
            ],
        ),
        "ts-05" => (
            "Run an ANOVA of spike count by variety and save the result.",
            vec![
                ("statistical_test", json!({"csv_path": "./results/wheat_phenotypes.csv", "test": "anova", "columns": ["variety", "leaf_count"]})),
                ("coding", code("Write the ANOVA statistic and p-value to ./results/spike_anova.txt.")),
            ],
        ),
        // Plots before the merge that produces the plotted table.
        "ts-06" => (
            "Segment, compute traits, plot, merge, then describe the plots.",
            vec![
                ("infer_instance_segmentation", json!({"file_path": "./data/wheat_metadata.csv", "checkpoint": "wheat_spike-instance-segmentation_gwhd_m2fb", "output_dir": "./results/wheat_growth"})),
                ("compute_phenotypes_from_ins_seg", json!({"ins_seg_result_path": "./results/wheat_growth/ins_seg_results.json", "save_path": "./results/wheat_growth_traits.csv"})),
                ("visualise", json!({"goal": "Leaf count and leaf area per treatment", "data_paths": ["./results/wheat_growth_traits.csv"], "output_path": "./results/wheat_growth.png"})),
                ("coding", code("Join ./results/wheat_growth_traits.csv with ./data/wheat_metadata.csv on file_name into ./results/wheat_growth_phenotypes.csv.")),
                ("analyse_plot", json!({"image_path": "./results/wheat_growth.png", "question": "How do the treatments differ?"})),
            ],
        ),
        "ts-07" => (
            "Classify the images, then plot the confusion matrix.",
            vec![
                ("infer_classification", json!({"file_path": "./data/stress_metadata.csv", "checkpoint": "plant_stress-classification_vit", "output_path": "./results/stress_predictions.csv"})),
                ("visualise", json!({"goal": "Confusion matrix of predicted label against manual_stress_level", "data_paths": ["./results/stress_predictions.csv", "./data/stress_metadata.csv"], "output_path": "./results/stress_confusion_matrix.png"})),
            ],
        ),
        "ts-08" => (
            "Find the top ecotype on day 26, then chart the maxima.",
            vec![
                ("analyse_table", json!({"csv_path": "./data/arabidopsis_phenotypes.csv", "question": "Which ecotype has the highest leaf count on day 26?"})),
                ("visualise", json!({"goal": "Bar chart of the maximum day-26 leaf count per ecotype", "data_paths": ["./data/arabidopsis_phenotypes.csv"], "output_path": "./results/ecotype_max_leaf_count.png"})),
            ],
        ),
        "ts-09" => (
            "Filter the symptomatic records, then chart symptom frequencies.",
            vec![
                ("coding", code("Keep rows of ./data/field_observations.csv whose disease_symptom is true and save ./results/symptoms.csv.")),
                ("visualise", json!({"goal": "Bar chart of symptom type counts", "data_paths": ["./results/symptoms.csv"], "output_path": "./results/symptom_counts.png"})),
            ],
        ),
        // Correlates against the wrong column.
        "ts-10" => (
            "Segment the roots, join lengths with the metadata, correlate.",
            vec![
                ("infer_instance_segmentation", json!({"file_path": "./data/maize_metadata.csv", "checkpoint": "maize_root-instance-segmentation_m2fb", "output_dir": "./results/maize"})),
                ("coding", code("Sum root lengths per image from ./results/maize/ins_seg_results.json, join with ./data/maize_metadata.csv and save ./results/maize_roots.csv.")),
                ("statistical_test", json!({"csv_path": "./results/maize_roots.csv", "test": "pearson", "columns": ["total_root_length", "plant_id"]})),
            ],
        ),
        other => unreachable!("no fixture for {other}"),
    }
}

pub fn tool_selection_turns(id: &str) -> Vec<AssistantTurn> {
    let (plan, list) = tool_selection_plan(id);
    vec![calls(plan, list), done("The requested steps have been run.")]
}

/// One answer line per task: the first admissible type, except that plant
/// vigour is answered as classification.
pub fn model_selection_turns() -> Vec<AssistantTurn> {
    let mut text = String::from("Recommended model types:\n");
    for task in model_selection_tasks() {
        let choice = if task.name.contains("vigor") {
            super::ModelType::Classification
        } else {
            *task.admissible.iter().next().expect("admissible type")
        };
        text.push_str(&format!("{}: {}\n", task.name, choice.as_str()));
    }
    vec![done(text.trim_end())]
}

const PY_PRELUDE: &str = "import csv\n\n";

fn python_for(task: &DataAnalysisTask) -> String {
    let body = match task.id {
        "da-01" | "da-02" => {
            let (day, pick, label) = if task.id == "da-01" { ("26", "max", "max_leaf_count") } else { ("1", "min", "min_leaf_count") };
            format!(
                "with open({path:?}, newline='') as f:\n    rows = [r for r in csv.DictReader(f) if r['days_after_sowing'] == '{day}']\n\
                 best = {pick}(rows, key=lambda r: int(r['leaf_count']))\n\
                 print(f\"{label}: {{int(best['leaf_count'])}}\")\n\
                 print(f\"plant_id: {{int(best['plant_id'])}}\")\n",
                path = task.data
            )
        }
        "da-03" | "da-04" => {
            let (pick, label) = if task.id == "da-03" { ("max", "max_dried_weight") } else { ("min", "min_dried_weight") };
            format!(
                "with open({path:?}, newline='') as f:\n    rows = [r for r in csv.DictReader(f) if r['variety'] == 'Voyager']\n\
                 best = {pick}(rows, key=lambda r: float(r['manual_dried_weight_g']))\n\
                 print(f\"{label}: {{float(best['manual_dried_weight_g'])!r}}\")\n\
                 print(f\"file_name: {{best['file_name']}}\")\n",
                path = task.data
            )
        }
        "da-05" => format!(
            "import pandas as pd\n\ndf = pd.read_csv({path:?})\n\
             sel = df[(df['ecotype'] == 'ein2') & (df['days_after_sowing'] == 26)]['projected_leaf_area']\n\
             print(f\"mean: {{float(sel.mean())!r}}\")\nprint(f\"std: {{float(sel.std())!r}}\")\n",
            path = task.data
        ),
        "da-06" => format!(
            "import pandas as pd\n\ndf = pd.read_csv({path:?})\n\
             sel = df[df['variety'] == 'Desiree']['manual_leaf_area_cm2']\n\
             print(f\"mean: {{float(sel.mean())!r}}\")\nprint(f\"std: {{float(sel.std())!r}}\")\n",
            path = task.data
        ),
        _ => {
            let out = task.plot.expect("plot task");
            let draw = match task.id {
                "da-07" => "sel = df[df['plant_id'] == 1].sort_values('days_after_sowing')\n\
                            ax.plot(sel['days_after_sowing'], sel['leaf_count'], marker='o')\n\
                            ax.set_xlabel('day'); ax.set_ylabel('leaf count')\n",
                "da-08" => "sel = df[df['days_after_sowing'] == 26].sort_values('plant_id')\n\
                            ax.bar(sel['plant_id'].astype(str), sel['leaf_count'])\n\
                            ax.set_xlabel('plant'); ax.set_ylabel('leaf count on day 26')\n",
                "da-09" => "ax.bar(df['plant_id'].astype(str), df['manual_dried_weight_g'])\n\
                            ax.set_xlabel('plant'); ax.set_ylabel('dried weight (g)')\n",
                _ => "ax.hist(df['manual_leaf_area_cm2'], bins=10)\n\
                      ax.set_xlabel('leaf area (cm2)'); ax.set_ylabel('plants')\n",
            };
            format!(
                "import os\nimport matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\nimport pandas as pd\n\n\
                 df = pd.read_csv({path:?})\nfig, ax = plt.subplots(figsize=(6, 4))\n{draw}\
                 os.makedirs(os.path.dirname({out:?}), exist_ok=True)\nfig.tight_layout()\nfig.savefig({out:?})\n\
                 print('saved {out}')\n",
                path = task.data
            )
        }
    };
    if body.contains("csv.DictReader") {
        format!("{PY_PRELUDE}{body}")
    } else {
        body
    }
}

/// Plan and call, the code writer's script, then a closing message that
/// carries no numbers so grading rests on what the script printed.
pub fn data_analysis_turns(task: &DataAnalysisTask) -> Vec<AssistantTurn> {
    let first = match task.kind {
        AnalysisKind::Values => calls(
            "Compute the answer from the table.",
            vec![("analyse_table", json!({"csv_path": task.data, "question": task.prompt}))],
        ),
        AnalysisKind::Plot => calls(
            "Draw the requested figure.",
            vec![(
                "visualise",
                json!({"goal": task.prompt, "data_paths": [task.data], "output_path": task.plot.expect("plot path")}),
            )],
        ),
    };
    vec![
        first,
        AssistantTurn::text(format!("```python\n{}```", python_for(task))),
        done("The result is shown in the tool output above."),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_tool_selection_fixture_ends_the_session() {
        for task in super::super::tool_selection_tasks() {
            let turns = tool_selection_turns(task.id);
            assert!(turns.last().unwrap().text.as_deref().unwrap().ends_with("TERMINATE"));
        }
    }

    #[test]
    fn closing_messages_hold_no_numbers() {
        for task in super::super::data_analysis_tasks() {
            let last = data_analysis_turns(&task).pop().unwrap().text.unwrap();
            assert!(!last.chars().any(|c| c.is_ascii_digit()), "{last}");
        }
    }
}
