//! Pure graders: each maps `(gold, actual)` to a verdict with a diagnostic.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ModelType, Verdict};
use crate::agents::extract_values;
use crate::imaging::validate_png;

/// Read-only tools that may appear anywhere without failing a sequence.
pub const BENIGN_TOOLS: [&str; 6] = [
    "get_model_zoo",
    "get_pipeline_zoo",
    "get_pipeline_info",
    "get_dataset_format",
    "poll_job",
    "suggest_bindings",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradeMode {
    #[default]
    StrictOrder,
    Set,
}

/// One expected step: any of `tools`, with the listed arguments checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldStep {
    pub tools: Vec<String>,
    #[serde(default)]
    pub args: BTreeMap<String, Value>,
    #[serde(default = "yes")]
    pub mandatory: bool,
}

fn yes() -> bool {
    true
}

impl GoldStep {
    pub fn new(tool: &str) -> Self {
        Self {
            tools: vec![tool.to_owned()],
            args: BTreeMap::new(),
            mandatory: true,
        }
    }

    pub fn any_of(tools: &[&str]) -> Self {
        Self {
            tools: tools.iter().map(|t| (*t).to_owned()).collect(),
            ..Self::new("")
        }
    }

    pub fn arg(mut self, name: &str, value: Value) -> Self {
        self.args.insert(name.to_owned(), value);
        self
    }

    pub fn optional(mut self) -> Self {
        self.mandatory = false;
        self
    }

    fn accepts_tool(&self, tool: &str) -> bool {
        self.tools.iter().any(|t| t == tool)
    }

    fn label(&self) -> String {
        self.tools.join("|")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graded {
    pub verdict: Verdict,
    pub detail: String,
}

impl Graded {
    fn pass(detail: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::Pass,
            detail: detail.into(),
        }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::Fail,
            detail: detail.into(),
        }
    }
}

fn norm_path(s: &str) -> String {
    let mut t = s.trim();
    while let Some(rest) = t.strip_prefix("./") {
        t = rest;
    }
    t.trim_end_matches('/').to_owned()
}

/// Gold strings compare as normalised paths; a gold string also matches an
/// array containing it; numbers compare to 1e-9 relative.
fn arg_matches(gold: &Value, actual: Option<&Value>) -> bool {
    let Some(actual) = actual else {
        return false;
    };
    match (gold, actual) {
        (Value::String(g), Value::String(a)) => norm_path(g).eq_ignore_ascii_case(&norm_path(a)),
        (Value::String(_), Value::Array(items)) => items.iter().any(|i| arg_matches(gold, Some(i))),
        (Value::Number(g), Value::Number(a)) => {
            let (g, a) = (g.as_f64().unwrap_or(f64::NAN), a.as_f64().unwrap_or(f64::NAN));
            (g - a).abs() <= 1e-9 * g.abs().max(1.0)
        }
        (Value::Number(_), Value::String(a)) => a
            .trim()
            .parse::<f64>()
            .is_ok_and(|a| arg_matches(gold, Some(&serde_json::json!(a)))),
        (Value::Array(gs), _) => gs.iter().all(|g| arg_matches(g, Some(actual))),
        _ => gold == actual,
    }
}

/// First argument of `step` that `args` gets wrong.
fn arg_mismatch(step: &GoldStep, args: &Value) -> Option<String> {
    step.args.iter().find_map(|(name, gold)| {
        let got = args.get(name);
        (!arg_matches(gold, got)).then(|| {
            format!(
                "argument `{name}` of `{}`: expected {gold}, got {}",
                step.label(),
                got.map_or_else(|| "nothing".to_owned(), Value::to_string)
            )
        })
    })
}

/// Grades a proposed tool sequence against the gold steps.
pub fn grade_tool_sequence(actual: &[(String, Value)], gold: &[GoldStep], mode: GradeMode) -> Graded {
    let steps: Vec<&(String, Value)> = actual
        .iter()
        .filter(|(t, _)| !BENIGN_TOOLS.contains(&t.as_str()))
        .collect();
    if let Some((tool, _)) = steps.iter().find(|(t, _)| !gold.iter().any(|g| g.accepts_tool(t))) {
        return Graded::fail(format!("unexpected tool `{tool}`"));
    }
    let mandatory: Vec<&GoldStep> = gold.iter().filter(|g| g.mandatory).collect();
    match mode {
        GradeMode::StrictOrder => {
            let mut from = 0;
            for (k, g) in mandatory.iter().enumerate() {
                let mut mismatch = None;
                let hit = steps[from..].iter().position(|(t, a)| {
                    if !g.accepts_tool(t) {
                        return false;
                    }
                    match arg_mismatch(g, a) {
                        None => true,
                        Some(m) => {
                            mismatch.get_or_insert(m);
                            false
                        }
                    }
                });
                match hit {
                    Some(i) => from += i + 1,
                    None => {
                        let earlier = steps[..from]
                            .iter()
                            .any(|(t, a)| g.accepts_tool(t) && arg_mismatch(g, a).is_none());
                        let detail = if earlier {
                            format!(
                                "step {} `{}` is out of order: it ran before `{}`",
                                k + 1,
                                g.label(),
                                mandatory[k - 1].label()
                            )
                        } else if let Some(m) = mismatch {
                            format!("step {}: {m}", k + 1)
                        } else {
                            format!("step {} `{}` is missing", k + 1, g.label())
                        };
                        return Graded::fail(detail);
                    }
                }
            }
        }
        GradeMode::Set => {
            let mut used = BTreeSet::new();
            for (k, g) in mandatory.iter().enumerate() {
                let hit = steps
                    .iter()
                    .enumerate()
                    .find(|(i, (t, a))| !used.contains(i) && g.accepts_tool(t) && arg_mismatch(g, a).is_none());
                match hit {
                    Some((i, _)) => {
                        used.insert(i);
                    }
                    None => {
                        let wrong = steps.iter().find_map(|(t, a)| {
                            g.accepts_tool(t).then(|| arg_mismatch(g, a)).flatten()
                        });
                        return Graded::fail(match wrong {
                            Some(m) => format!("step {}: {m}", k + 1),
                            None => format!("step {} `{}` is missing", k + 1, g.label()),
                        });
                    }
                }
            }
        }
    }
    Graded::pass(format!("{} mandatory step(s) matched", mandatory.len()))
}

/// Model types named in free text.
pub fn mentioned_types(text: &str) -> BTreeSet<ModelType> {
    let t = text.to_ascii_lowercase();
    let mut out = BTreeSet::new();
    if t.contains("segmentation") {
        out.insert(ModelType::InstanceSegmentation);
    }
    if t.contains("classification") || t.contains("classifier") {
        out.insert(ModelType::Classification);
    }
    if t.contains("regression") || t.contains("regressor") {
        out.insert(ModelType::Regression);
    }
    out
}

/// The part of the answer about `task`: the text after the task name on
/// the line that names it. A line belongs to the longest task name it
/// contains, so nested names do not steal each other's lines.
pub fn answer_for<'a>(answer: &'a str, task: &str, all_tasks: &[&str]) -> Option<&'a str> {
    let key = task.to_ascii_lowercase();
    answer.lines().find_map(|line| {
        let lower = line.to_ascii_lowercase();
        let owner = all_tasks
            .iter()
            .filter(|t| lower.contains(&t.to_ascii_lowercase()))
            .max_by_key(|t| t.len())?;
        if !owner.eq_ignore_ascii_case(task) {
            return None;
        }
        let at = lower.find(&key)? + key.len();
        Some(&line[at..])
    })
}

/// Grades the answer fragment for one task.
pub fn grade_model_selection(fragment: Option<&str>, admissible: &BTreeSet<ModelType>) -> Graded {
    let Some(fragment) = fragment else {
        return Graded::fail("no answer line for this task");
    };
    let types = mentioned_types(fragment);
    match types.len() {
        0 => Graded::fail(format!("no model type in `{}`", fragment.trim())),
        1 => {
            let t = *types.iter().next().expect("one type");
            if admissible.contains(&t) {
                Graded::pass(t.as_str())
            } else {
                let allowed: Vec<&str> = admissible.iter().map(|t| t.as_str()).collect();
                Graded::fail(format!("{} is not admissible (expected one of {})", t.as_str(), allowed.join(", ")))
            }
        }
        _ => Graded::fail(format!("ambiguous: `{}` names several model types", fragment.trim())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Tolerance {
    Exact,
    Relative(f64),
}

impl Tolerance {
    pub const STATISTIC: Tolerance = Tolerance::Relative(1e-6);

    fn accepts(self, gold: f64, got: f64) -> bool {
        match self {
            Tolerance::Exact => gold == got,
            Tolerance::Relative(r) => (gold - got).abs() <= r * gold.abs().max(f64::MIN_POSITIVE),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Expected {
    Number { label: String, value: f64, tolerance: Tolerance },
    Text { label: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum AnalysisGold {
    Values { expected: Vec<Expected> },
    Plot { path: String },
}

/// What a data-analysis session left behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutcome {
    pub completed: bool,
    /// Final reply plus the printed output of analysis tools.
    pub answer: String,
    pub error: Option<String>,
}

pub fn grade_data_analysis(gold: &AnalysisGold, outcome: &AnalysisOutcome, workspace: &Path) -> Graded {
    if !outcome.completed {
        return Graded {
            verdict: Verdict::Error,
            detail: outcome.error.clone().unwrap_or_else(|| "run did not complete".into()),
        };
    }
    match gold {
        AnalysisGold::Values { expected } => {
            let (named, values) = extract_values(&outcome.answer);
            for e in expected {
                match e {
                    Expected::Number { label, value, tolerance } => {
                        let ok = match named.get(label) {
                            Some(v) => tolerance.accepts(*value, *v),
                            None => values.iter().any(|v| tolerance.accepts(*value, *v)),
                        };
                        if !ok {
                            return Graded::fail(format!(
                                "{label}: expected {value}, found {}",
                                named.get(label).map_or_else(|| format!("{values:?}"), f64::to_string)
                            ));
                        }
                    }
                    Expected::Text { label, value } => {
                        if !outcome.answer.contains(value.as_str()) {
                            return Graded::fail(format!("{label}: `{value}` not in the answer"));
                        }
                    }
                }
            }
            Graded::pass(format!("{} value(s) matched", expected.len()))
        }
        AnalysisGold::Plot { path } => {
            let file = workspace.join(norm_path(path));
            if !file.is_file() {
                return Graded::fail(format!("artifact missing: {path}"));
            }
            match validate_png(&file) {
                Ok((w, h)) if w > 0 && h > 0 => Graded::pass(format!("{path}: {w}x{h} PNG")),
                Ok((w, h)) => Graded::fail(format!("{path}: empty {w}x{h} image")),
                Err(e) => Graded::fail(format!("{path}: {e}")),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn seq(items: &[(&str, Value)]) -> Vec<(String, Value)> {
        items.iter().map(|(t, a)| ((*t).to_owned(), a.clone())).collect()
    }

    fn gold() -> Vec<GoldStep> {
        vec![
            GoldStep::new("infer_instance_segmentation"),
            GoldStep::new("compute_phenotypes_from_ins_seg").arg("pixel_to_cm", json!(0.03)),
            GoldStep::new("coding"),
        ]
    }

    #[test]
    fn exact_sequence_passes_and_benign_extras_are_ignored() {
        let actual = seq(&[
            ("get_model_zoo", json!({})),
            ("infer_instance_segmentation", json!({})),
            ("compute_phenotypes_from_ins_seg", json!({"pixel_to_cm": 0.03})),
            ("coding", json!({})),
        ]);
        assert_eq!(grade_tool_sequence(&actual, &gold(), GradeMode::StrictOrder).verdict, Verdict::Pass);
    }

    #[test]
    fn swapped_order_fails_under_strict_but_not_set() {
        let actual = seq(&[
            ("compute_phenotypes_from_ins_seg", json!({"pixel_to_cm": 0.03})),
            ("infer_instance_segmentation", json!({})),
            ("coding", json!({})),
        ]);
        let g = grade_tool_sequence(&actual, &gold(), GradeMode::StrictOrder);
        assert_eq!(g.verdict, Verdict::Fail);
        assert!(g.detail.contains("out of order"), "{}", g.detail);
        assert_eq!(grade_tool_sequence(&actual, &gold(), GradeMode::Set).verdict, Verdict::Pass);
    }

    #[test]
    fn wrong_checked_argument_names_the_argument() {
        let actual = seq(&[
            ("infer_instance_segmentation", json!({})),
            ("compute_phenotypes_from_ins_seg", json!({"pixel_to_cm": 0.3})),
            ("coding", json!({})),
        ]);
        for mode in [GradeMode::StrictOrder, GradeMode::Set] {
            let g = grade_tool_sequence(&actual, &gold(), mode);
            assert_eq!(g.verdict, Verdict::Fail);
            assert!(g.detail.contains("pixel_to_cm"), "{}", g.detail);
        }
    }

    #[test]
    fn unexpected_and_missing_tools_fail() {
        let extra = seq(&[
            ("infer_instance_segmentation", json!({})),
            ("train_model", json!({})),
            ("compute_phenotypes_from_ins_seg", json!({"pixel_to_cm": 0.03})),
            ("coding", json!({})),
        ]);
        assert!(grade_tool_sequence(&extra, &gold(), GradeMode::StrictOrder).detail.contains("unexpected"));
        let missing = seq(&[("infer_instance_segmentation", json!({})), ("coding", json!({}))]);
        let g = grade_tool_sequence(&missing, &gold(), GradeMode::StrictOrder);
        assert!(g.detail.contains("missing"), "{}", g.detail);
    }

    #[test]
    fn path_and_array_arguments_are_normalised() {
        let g = vec![GoldStep::new("statistical_test")
            .arg("csv_path", json!("./results/x.csv"))
            .arg("columns", json!("yield"))];
        let ok = seq(&[("statistical_test", json!({"csv_path": "results/x.csv", "columns": ["len", "yield"]}))]);
        assert_eq!(grade_tool_sequence(&ok, &g, GradeMode::StrictOrder).verdict, Verdict::Pass);
        let bad = seq(&[("statistical_test", json!({"csv_path": "results/x.csv", "columns": ["len", "id"]}))]);
        assert!(grade_tool_sequence(&bad, &g, GradeMode::StrictOrder).detail.contains("columns"));
    }

    #[test]
    fn model_selection_lines() {
        let tasks = ["Leaf counting", "Leaf shape classification", "Plant vigor scoring"];
        let answer = "1. Leaf counting: instance segmentation\n\
                      2. Leaf shape classification - image classification\n\
                      3. Plant vigor scoring: image classification or image regression";
        let reg: BTreeSet<ModelType> = [ModelType::Regression].into();
        let cls: BTreeSet<ModelType> = [ModelType::Classification].into();
        let count: BTreeSet<ModelType> = [ModelType::InstanceSegmentation, ModelType::Regression].into();
        assert_eq!(grade_model_selection(answer_for(answer, tasks[0], &tasks), &count).verdict, Verdict::Pass);
        assert_eq!(grade_model_selection(answer_for(answer, tasks[1], &tasks), &cls).verdict, Verdict::Pass);
        let g = grade_model_selection(answer_for(answer, tasks[2], &tasks), &reg);
        assert!(g.detail.starts_with("ambiguous"), "{}", g.detail);
        let g = grade_model_selection(Some(": image regression"), &reg);
        assert_eq!(g.verdict, Verdict::Pass);
        let g = grade_model_selection(Some(": image classification"), &reg);
        assert_eq!(g.verdict, Verdict::Fail);
        assert_eq!(grade_model_selection(None, &reg).verdict, Verdict::Fail);
    }

    #[test]
    fn numeric_answers_and_plots() {
        let gold = AnalysisGold::Values {
            expected: vec![
                Expected::Number { label: "max_leaf_count".into(), value: 14.0, tolerance: Tolerance::Exact },
                Expected::Number { label: "mean".into(), value: 2.0 / 3.0, tolerance: Tolerance::STATISTIC },
                Expected::Text { label: "file".into(), value: "p_07.png".into() },
            ],
        };
        let out = |answer: &str| AnalysisOutcome { completed: true, answer: answer.into(), error: None };
        let dir = tempfile::tempdir().unwrap();
        let good = out("max_leaf_count: 14\nmean: 0.6666667\nfile_name: p_07.png");
        assert_eq!(grade_data_analysis(&gold, &good, dir.path()).verdict, Verdict::Pass);
        let bad = out("max_leaf_count: 13\nmean: 0.6666667\np_07.png");
        assert_eq!(grade_data_analysis(&gold, &bad, dir.path()).verdict, Verdict::Fail);
        let off = out("max_leaf_count: 14\nmean: 0.667\np_07.png");
        assert_eq!(grade_data_analysis(&gold, &off, dir.path()).verdict, Verdict::Fail);

        let plot = AnalysisGold::Plot { path: "./out/p.png".into() };
        let g = grade_data_analysis(&plot, &out(""), dir.path());
        assert!(g.detail.contains("artifact missing"));
        std::fs::create_dir_all(dir.path().join("out")).unwrap();
        crate::imaging::write_solid_png(dir.path().join("out/p.png"), 3, 2, [0, 0, 0]).unwrap();
        assert_eq!(grade_data_analysis(&plot, &out(""), dir.path()).verdict, Verdict::Pass);
        let failed = AnalysisOutcome { completed: false, answer: String::new(), error: Some("provider".into()) };
        assert_eq!(grade_data_analysis(&plot, &failed, dir.path()).verdict, Verdict::Error);
    }
}
