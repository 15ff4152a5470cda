//! Benchmark suites: tool selection, model selection and data analysis.
//!
//! Every task runs as a real manager session; verdicts are computed from the
//! stored transcript (and, for data analysis, the session workspace), so a
//! report can be regraded later from the store alone.

mod data;
mod grade;
mod replay;
mod tasks;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use data::{aracrop_rows, mean_std, potato_rows, write_eval_data, ARACROP_CSV, POTATO_CSV};
pub use grade::{
    answer_for, grade_data_analysis, grade_model_selection, grade_tool_sequence, mentioned_types, AnalysisGold,
    AnalysisOutcome, Expected, GoldStep, GradeMode, Graded, Tolerance, BENIGN_TOOLS,
};
pub use tasks::{
    analysis_gold, data_analysis_tasks, model_selection_prompt, model_selection_tasks, tool_selection_tasks,
    AnalysisKind, DataAnalysisTask, ModelSelectionTask, ToolSelectionTask,
};

use crate::llm::{ChatProvider, ProviderIdentity, ReplayProvider};
use crate::manager::{EventKind, Manager, ManagerError, SessionConfig, SessionEvent, SessionStore};
use crate::registry::{ToolOutput, ToolRegistry};
use crate::toolkit::{default_registry, Services, ToolContext, ToolkitError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("unknown suite `{0}` (expected tool_selection, model_selection or data_analysis)")]
    UnknownSuite(String),
    #[error(transparent)]
    Manager(#[from] ManagerError),
    #[error(transparent)]
    Toolkit(#[from] ToolkitError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("report: {0}")]
    Report(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    ToolSelection,
    ModelSelection,
    DataAnalysis,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::ToolSelection, Suite::ModelSelection, Suite::DataAnalysis];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::ToolSelection => "tool_selection",
            Suite::ModelSelection => "model_selection",
            Suite::DataAnalysis => "data_analysis",
        }
    }
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k = s.trim().to_ascii_lowercase().replace('-', "_");
        Suite::ALL
            .into_iter()
            .find(|suite| suite.as_str() == k)
            .ok_or_else(|| EvalError::UnknownSuite(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelType {
    InstanceSegmentation,
    Classification,
    Regression,
}

impl ModelType {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelType::InstanceSegmentation => "instance segmentation",
            ModelType::Classification => "image classification",
            ModelType::Regression => "image regression",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Error,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub session_id: String,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    /// `replay` or `live`.
    pub mode: String,
    pub provider: ProviderIdentity,
    pub results: Vec<TaskResult>,
    pub passes: usize,
    pub total: usize,
    pub success_rate: f64,
}

impl SuiteReport {
    fn new(suite: Suite, mode: &str, provider: ProviderIdentity, results: Vec<TaskResult>) -> Self {
        let passes = results.iter().filter(|r| r.verdict == Verdict::Pass).count();
        let total = results.len();
        Self {
            suite,
            mode: mode.to_owned(),
            provider,
            results,
            passes,
            total,
            success_rate: if total == 0 { 0.0 } else { passes as f64 / total as f64 },
        }
    }

    pub fn result(&self, task_id: &str) -> Option<&TaskResult> {
        self.results.iter().find(|r| r.task_id == task_id)
    }
}

/// Where each session's model comes from.
#[derive(Clone)]
pub enum ProviderSource {
    /// Recorded turns bundled with the crate; one fresh provider per session.
    Replay,
    /// One provider shared by every session of the suite.
    Live(Arc<dyn ChatProvider>),
}

impl ProviderSource {
    fn mode(&self) -> &'static str {
        match self {
            ProviderSource::Replay => "replay",
            ProviderSource::Live(_) => "live",
        }
    }
}

/// The full tool surface with handlers that do nothing: tool choice is
/// graded from proposals, so execution would only add noise and latency.
pub fn stub_registry() -> ToolRegistry {
    let stubs = ToolRegistry::new();
    for spec in default_registry().list_tools() {
        let name = spec.name.clone();
        let handler = move |_: &Value, _: &ToolContext<'_>| -> Result<ToolOutput, String> {
            if name == "get_model_zoo" {
                return Ok(ToolOutput::value(json!({"models": replay::SYNTHETIC_ZOO})));
            }
            Ok(ToolOutput::value(json!({"status": "ok", "note": "evaluation stub, nothing was executed"})))
        };
        stubs
            .register_tool(spec, Arc::new(handler))
            .expect("default specs are valid");
    }
    stubs
}

struct Runner {
    manager: Manager,
    source: ProviderSource,
}

impl Runner {
    fn provider(&self, replay_turns: impl FnOnce() -> Vec<crate::llm::AssistantTurn>) -> Arc<dyn ChatProvider> {
        match &self.source {
            ProviderSource::Replay => Arc::new(ReplayProvider::from_turns(replay_turns())),
            ProviderSource::Live(p) => Arc::clone(p),
        }
    }

    fn session(&self, provider: Arc<dyn ChatProvider>) -> Result<String, EvalError> {
        Ok(self.manager.start_session(SessionConfig::new(provider))?)
    }

    /// Sends the prompt; provider failures end up in the transcript, only
    /// store failures are errors here.
    fn ask(&self, id: &str, prompt: &str) -> Result<(), EvalError> {
        match self.manager.submit_user_message(id, prompt, &[]) {
            Ok(_) => Ok(()),
            Err(e @ (ManagerError::Store(_) | ManagerError::Workspace(_))) => Err(e.into()),
            Err(e) => {
                tracing::warn!(session = id, error = %e, "evaluation session did not run");
                Ok(())
            }
        }
    }
}

fn replay_identity() -> ProviderIdentity {
    ReplayProvider::from_turns(Vec::new()).identity()
}

/// Runs one suite with sessions stored under `store_root`.
pub fn run_suite(suite: Suite, source: ProviderSource, store_root: &Path) -> Result<SuiteReport, EvalError> {
    let services = Arc::new(Services::open(store_root)?);
    let registry = match suite {
        Suite::ToolSelection => stub_registry(),
        _ => default_registry(),
    };
    let runner = Runner {
        manager: Manager::new(services, Arc::new(registry)),
        source: source.clone(),
    };
    let identity = match &source {
        ProviderSource::Replay => replay_identity(),
        ProviderSource::Live(p) => p.identity(),
    };
    let mut sessions = Vec::new();
    match suite {
        Suite::ToolSelection => {
            for task in tool_selection_tasks() {
                let id = runner.session(runner.provider(|| replay::tool_selection_turns(task.id)))?;
                runner.ask(&id, &task.prompt)?;
                sessions.push((task.id.to_owned(), id));
            }
        }
        Suite::ModelSelection => {
            let id = runner.session(runner.provider(replay::model_selection_turns))?;
            runner.ask(&id, &model_selection_prompt())?;
            sessions.extend(model_selection_tasks().into_iter().map(|t| (t.id, id.clone())));
        }
        Suite::DataAnalysis => {
            for task in data_analysis_tasks() {
                let id = runner.session(runner.provider(|| replay::data_analysis_turns(&task)))?;
                write_eval_data(runner.manager.workspace(&id)?.root())?;
                runner.ask(&id, &task.prompt)?;
                sessions.push((task.id.to_owned(), id));
            }
        }
    }
    let results = grade_sessions(suite, &sessions, &runner.manager.services().sessions)?;
    Ok(SuiteReport::new(suite, source.mode(), identity, results))
}

/// Recomputes every verdict of `report` from the transcripts under
/// `store_root`.
pub fn regrade(report: &SuiteReport, store_root: &Path) -> Result<Vec<TaskResult>, EvalError> {
    let sessions: Vec<(String, String)> = report
        .results
        .iter()
        .map(|r| (r.task_id.clone(), r.session_id.clone()))
        .collect();
    grade_sessions(report.suite, &sessions, &SessionStore::new(store_root))
}

fn grade_sessions(
    suite: Suite,
    sessions: &[(String, String)],
    store: &SessionStore,
) -> Result<Vec<TaskResult>, EvalError> {
    let mut out = Vec::with_capacity(sessions.len());
    match suite {
        Suite::ToolSelection => {
            let tasks = tool_selection_tasks();
            for (task_id, sid) in sessions {
                let task = tasks
                    .iter()
                    .find(|t| t.id == task_id)
                    .ok_or_else(|| EvalError::Report(format!("unknown task {task_id}")))?;
                let events = store.read_events(sid, 0)?;
                let g = match run_error(&events) {
                    Some(e) if proposals(&events).is_empty() => Graded { verdict: Verdict::Error, detail: e },
                    _ => grade_tool_sequence(&proposals(&events), &task.gold, task.mode),
                };
                out.push(result(task_id, sid, g));
            }
        }
        Suite::ModelSelection => {
            let tasks = model_selection_tasks();
            let names: Vec<&str> = tasks.iter().map(|t| t.name).collect();
            for (task_id, sid) in sessions {
                let task = tasks
                    .iter()
                    .find(|t| &t.id == task_id)
                    .ok_or_else(|| EvalError::Report(format!("unknown task {task_id}")))?;
                let events = store.read_events(sid, 0)?;
                let g = match (final_text(&events), run_error(&events)) {
                    (None, Some(e)) => Graded { verdict: Verdict::Error, detail: e },
                    (answer, _) => {
                        let answer = answer.unwrap_or_default();
                        grade_model_selection(answer_for(&answer, task.name, &names), &task.admissible)
                    }
                };
                out.push(result(task_id, sid, g));
            }
        }
        Suite::DataAnalysis => {
            let tasks = data_analysis_tasks();
            for (task_id, sid) in sessions {
                let task = tasks
                    .iter()
                    .find(|t| t.id == task_id)
                    .ok_or_else(|| EvalError::Report(format!("unknown task {task_id}")))?;
                let events = store.read_events(sid, 0)?;
                let workspace = workspace_of(store, sid, &events)?;
                let gold = analysis_gold(task, &workspace)?;
                let g = grade_data_analysis(&gold, &analysis_outcome(&events), &workspace);
                out.push(result(task_id, sid, g));
            }
        }
    }
    Ok(out)
}

fn result(task_id: &str, session_id: &str, g: Graded) -> TaskResult {
    TaskResult {
        task_id: task_id.to_owned(),
        session_id: session_id.to_owned(),
        verdict: g.verdict,
        detail: g.detail,
    }
}

fn proposals(events: &[SessionEvent]) -> Vec<(String, Value)> {
    events
        .iter()
        .filter(|e| e.kind == EventKind::ToolCallProposed)
        .map(|e| {
            (
                e.payload["tool"].as_str().unwrap_or_default().to_owned(),
                e.payload.get("arguments").cloned().unwrap_or(Value::Null),
            )
        })
        .collect()
}

fn run_error(events: &[SessionEvent]) -> Option<String> {
    events
        .iter()
        .rev()
        .find(|e| e.kind == EventKind::Error)
        .map(|e| e.payload["message"].as_str().unwrap_or("session error").to_owned())
}

/// The last thing the assistant said in its own words.
fn final_text(events: &[SessionEvent]) -> Option<String> {
    events
        .iter()
        .rev()
        .find(|e| matches!(e.kind, EventKind::Summary | EventKind::AssistantMessage | EventKind::Plan))
        .and_then(|e| e.payload["text"].as_str())
        .map(str::to_owned)
}

fn analysis_outcome(events: &[SessionEvent]) -> AnalysisOutcome {
    let completed = events
        .iter()
        .any(|e| e.kind == EventKind::Terminated && e.payload["reason"] == "completed");
    let mut answer = String::new();
    for e in events {
        let text = match e.kind {
            EventKind::Summary | EventKind::AssistantMessage => e.payload["text"].as_str(),
            EventKind::ToolResult => {
                let output = &e.payload["output"];
                output["answer"].as_str().or_else(|| output["stdout"].as_str())
            }
            _ => None,
        };
        if let Some(t) = text {
            answer.push_str(t);
            answer.push('\n');
        }
    }
    AnalysisOutcome {
        completed,
        answer,
        error: if completed { None } else { run_error(events) },
    }
}

fn workspace_of(store: &SessionStore, id: &str, events: &[SessionEvent]) -> Result<PathBuf, EvalError> {
    let recorded = events
        .iter()
        .find(|e| e.kind == EventKind::SessionStarted)
        .and_then(|e| e.payload["config"]["workdir"].as_str())
        .map(PathBuf::from);
    match recorded {
        Some(p) if p.is_absolute() => Ok(p),
        _ => Ok(store.artifacts_dir(id)?),
    }
}

/// Writes `{suite}.json` and `{suite}.csv` into `dir`.
pub fn write_report(report: &SuiteReport, dir: &Path) -> Result<(PathBuf, PathBuf), EvalError> {
    std::fs::create_dir_all(dir)?;
    let json_path = dir.join(format!("{}.json", report.suite));
    let text = serde_json::to_string_pretty(report).map_err(|e| EvalError::Report(e.to_string()))?;
    std::fs::write(&json_path, text + "\n")?;
    let csv_path = dir.join(format!("{}.csv", report.suite));
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| EvalError::Report(e.to_string()))?;
    let csv_err = |e: csv::Error| EvalError::Report(e.to_string());
    w.write_record(["suite", "task_id", "verdict", "detail"]).map_err(csv_err)?;
    for r in &report.results {
        w.write_record([report.suite.as_str(), &r.task_id, r.verdict.as_str(), &r.detail])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok((json_path, csv_path))
}

pub fn read_report(path: &Path) -> Result<SuiteReport, EvalError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| EvalError::Report(format!("{}: {e}", path.display())))
}

/// Admissible types of every model-selection task, by name.
pub fn model_selection_gold() -> Vec<(&'static str, BTreeSet<ModelType>)> {
    model_selection_tasks().into_iter().map(|t| (t.name, t.admissible)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse_both_spellings() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
            assert_eq!(s.as_str().replace('_', "-").parse::<Suite>().unwrap(), s);
        }
        assert!("vision".parse::<Suite>().is_err());
    }

    #[test]
    fn task_counts() {
        assert_eq!(tool_selection_tasks().len(), 10);
        assert_eq!(model_selection_tasks().len(), 50);
        assert_eq!(data_analysis_tasks().len(), 10);
        let names: BTreeSet<&str> = model_selection_tasks().iter().map(|t| t.name).collect();
        assert_eq!(names.len(), 50);
    }

    #[test]
    fn stub_registry_mirrors_the_default_surface() {
        let stub = stub_registry();
        assert_eq!(stub.list_tools(), default_registry().list_tools());
    }
}
