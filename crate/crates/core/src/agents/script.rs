use std::collections::HashMap;
use std::path::PathBuf;
use std::time::SystemTime;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::sandbox::{execute, Execution, InterpreterProfile, ScriptSlots};
use super::{AgentError, TERMINATE};
use crate::llm::{chat, ChatMessage, ChatProvider};
use crate::registry::ExecutedScript;
use crate::table::Table;
use crate::workspace::Workspace;

/// A goal for the script writer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptTask {
    pub goal: String,
    /// Files the script is expected to read, relative to the workspace.
    #[serde(default)]
    pub context_paths: Vec<String>,
    /// Interpreter profile name; the default profile when absent.
    #[serde(default)]
    pub profile: Option<String>,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_attempts() -> usize {
    3
}

impl ScriptTask {
    pub fn new(goal: impl Into<String>) -> Self {
        Self {
            goal: goal.into(),
            context_paths: Vec::new(),
            profile: None,
            max_attempts: default_attempts(),
        }
    }

    pub fn with_context(mut self, paths: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.context_paths.extend(paths.into_iter().map(Into::into));
        self
    }

    pub fn with_attempts(mut self, n: usize) -> Self {
        self.max_attempts = n;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub script: String,
    pub exit_status: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
}

impl Attempt {
    fn from_execution(script: String, e: &Execution) -> Self {
        Self {
            script,
            exit_status: e.exit_code,
            stdout: e.stdout.clone(),
            stderr: e.stderr.clone(),
            timed_out: e.timed_out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptOutcome {
    pub attempts: Vec<Attempt>,
    pub status: OutcomeStatus,
    /// Files created or modified by the successful attempt.
    pub artifacts: Vec<String>,
    pub profile: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_text: Option<String>,
}

impl ScriptOutcome {
    pub fn succeeded(&self) -> bool {
        self.status == OutcomeStatus::Success
    }

    pub fn last(&self) -> Option<&Attempt> {
        self.attempts.last()
    }

    /// The successful script as a replayable record.
    pub fn executed(&self, inputs: &[String]) -> Option<ExecutedScript> {
        if !self.succeeded() {
            return None;
        }
        self.last().map(|a| ExecutedScript {
            profile: self.profile.clone(),
            source: a.script.clone(),
            inputs: inputs.to_vec(),
            outputs: self.artifacts.clone(),
        })
    }

    /// Converts a failure into an error carrying the last diagnostics.
    pub fn into_result(self) -> Result<Self, AgentError> {
        if self.succeeded() {
            return Ok(self);
        }
        let detail = self
            .last()
            .map(|a| {
                if a.stderr.trim().is_empty() {
                    a.stdout.trim().to_owned()
                } else {
                    a.stderr.trim().to_owned()
                }
            })
            .unwrap_or_default();
        Err(AgentError::AttemptsExhausted {
            attempts: self.attempts.len(),
            detail,
        })
    }
}

fn fence() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[A-Za-z0-9_+-]*[ \t]*\r?\n(.*?)```").expect("fence regex"))
}

/// The longest fenced code block in a model reply.
pub fn extract_code(text: &str) -> Option<String> {
    fence()
        .captures_iter(text)
        .filter_map(|c| c.get(1).map(|m| m.as_str().to_owned()))
        .max_by_key(String::len)
}

/// True when `text` contains `TERMINATE` as a standalone word.
pub fn has_terminate(text: &str) -> bool {
    text.split(|c: char| !c.is_ascii_alphanumeric() && c != '_')
        .any(|w| w == TERMINATE)
}

/// File modification stamps keyed by absolute path.
pub type Stamp = HashMap<PathBuf, (SystemTime, u64)>;

pub fn stamp(ws: &Workspace) -> Stamp {
    ws.snapshot().into_iter().map(|(p, t, n)| (p, (t, n))).collect()
}

/// Files created or changed since `before`, relative and sorted.
pub fn changed_files(ws: &Workspace, before: &Stamp) -> Vec<String> {
    let mut out: Vec<String> = ws
        .snapshot()
        .into_iter()
        .filter(|(p, t, n)| before.get(p) != Some(&(*t, *n)))
        .map(|(p, _, _)| ws.relative(&p))
        .collect();
    out.sort();
    out
}

fn describe_context(ws: &Workspace, paths: &[String]) -> String {
    let mut s = String::new();
    for p in paths {
        s.push_str(&format!("- {p}"));
        if let Ok(abs) = ws.resolve(p) {
            let is_csv = abs.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            if is_csv {
                if let Ok(t) = Table::read_csv(&abs) {
                    s.push_str(&format!(" (columns: {}; {} rows)", t.headers.join(", "), t.rows.len()));
                }
            } else if !abs.exists() {
                s.push_str(" (does not exist yet)");
            }
        }
        s.push('\n');
    }
    s
}

/// Asks `provider` for a complete script, runs it, and feeds failures back
/// until it succeeds, the model answers with the terminate token and no
/// code, or `max_attempts` scripts have run.
///
/// A sandbox violation ends the task at once with an error.
pub fn run_script_task(
    task: &ScriptTask,
    system_prompt: &str,
    provider: &dyn ChatProvider,
    ws: &Workspace,
    profile: &InterpreterProfile,
    slots: &ScriptSlots,
    label: &str,
) -> Result<ScriptOutcome, AgentError> {
    if task.goal.trim().is_empty() {
        return Err(AgentError::Precondition("script goal is empty".into()));
    }
    if task.max_attempts == 0 {
        return Err(AgentError::Precondition("max_attempts must be at least 1".into()));
    }
    let mut user = format!(
        "Task: {}\n\nWorking directory: the current directory. Use relative paths only; \
         files outside it are not accessible.\nLanguage: {} (one complete program in a single fenced code block).\n",
        task.goal.trim(),
        profile.name
    );
    if !task.context_paths.is_empty() {
        user.push_str("\nRelevant files:\n");
        user.push_str(&describe_context(ws, &task.context_paths));
    }
    let mut messages = vec![ChatMessage::system(system_prompt), ChatMessage::user(user)];
    let before = stamp(ws);
    let mut attempts = Vec::new();
    let mut final_text = None;
    let mut status = OutcomeStatus::Failure;
    while attempts.len() < task.max_attempts {
        let turn = chat(provider, &messages, &[])?;
        let text = turn.text.unwrap_or_default();
        messages.push(ChatMessage::assistant(Some(text.clone()), Vec::new()));
        let Some(code) = extract_code(&text) else {
            if has_terminate(&text) {
                final_text = Some(text);
                break;
            }
            attempts.push(Attempt {
                script: String::new(),
                exit_status: None,
                stdout: String::new(),
                stderr: "no fenced code block in the reply".into(),
                timed_out: false,
            });
            messages.push(ChatMessage::user(
                "The reply contained no fenced code block. Reply with the complete program in one fenced block.",
            ));
            continue;
        };
        let n = attempts.len() + 1;
        let exec = execute(ws, profile, slots, &code, &format!("{label}_attempt{n}"))?;
        attempts.push(Attempt::from_execution(code, &exec));
        if exec.success() {
            status = OutcomeStatus::Success;
            final_text = Some(text);
            break;
        }
        tracing::debug!(attempt = n, "script attempt failed");
        messages.push(ChatMessage::user(format!(
            "{}\nFix the problem and reply with the complete corrected program.",
            exec.failure_report()
        )));
    }
    let artifacts = if status == OutcomeStatus::Success {
        changed_files(ws, &before)
    } else {
        Vec::new()
    };
    Ok(ScriptOutcome {
        attempts,
        status,
        artifacts,
        profile: profile.name.clone(),
        final_text,
    })
}
