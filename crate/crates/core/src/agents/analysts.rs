use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::sandbox::{InterpreterProfile, ScriptSlots};
use super::script::{run_script_task, ScriptOutcome, ScriptTask};
use super::AgentError;
use crate::imaging::{validate_image, validate_png};
use crate::llm::{chat, ChatMessage, ChatProvider, LlmError};
use crate::table::Table;
use crate::workspace::Workspace;

/// Shared inputs of the script-backed analysts.
pub struct ScriptEnv<'a> {
    pub ws: &'a Workspace,
    pub provider: &'a dyn ChatProvider,
    pub profile: &'a InterpreterProfile,
    pub slots: &'a ScriptSlots,
    pub max_attempts: usize,
    /// Prefix of script file names.
    pub label: &'a str,
}

fn require_file(ws: &Workspace, path: &str) -> Result<std::path::PathBuf, AgentError> {
    let abs = ws.resolve(path).map_err(|e| AgentError::SandboxViolation(e.to_string()))?;
    if !abs.is_file() {
        return Err(AgentError::Precondition(format!("input file `{path}` does not exist")));
    }
    Ok(abs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotOutcome {
    pub path: String,
    pub width: u32,
    pub height: u32,
    pub script: ScriptOutcome,
}

/// Writes a plot of `data_paths` to `output_path` (PNG) via the script writer.
/// Inputs are checked before the provider is contacted; success requires
/// the declared PNG to exist and parse.
pub fn visualise(
    env: &ScriptEnv<'_>,
    system_prompt: &str,
    goal: &str,
    data_paths: &[String],
    output_path: &str,
    style: Option<&str>,
) -> Result<PlotOutcome, AgentError> {
    for p in data_paths {
        require_file(env.ws, p)?;
    }
    if !output_path.to_ascii_lowercase().ends_with(".png") {
        return Err(AgentError::Precondition(format!("plot output `{output_path}` must be a .png file")));
    }
    let target = env
        .ws
        .resolve(output_path)
        .map_err(|e| AgentError::SandboxViolation(e.to_string()))?;
    let mut goal = format!("{}\nSave the figure as a PNG file at `{output_path}`.", goal.trim());
    if let Some(style) = style.filter(|s| !s.trim().is_empty()) {
        goal.push_str(&format!("\nStyle requirements: {}", style.trim()));
    }
    let task = ScriptTask::new(goal)
        .with_context(data_paths.iter().cloned())
        .with_attempts(env.max_attempts);
    let outcome = run_script_task(&task, system_prompt, env.provider, env.ws, env.profile, env.slots, env.label)?
        .into_result()?;
    if !target.exists() {
        return Err(AgentError::MissingOutput(output_path.to_owned()));
    }
    let (width, height) = validate_png(&target).map_err(|e| AgentError::InvalidOutput(e.to_string()))?;
    Ok(PlotOutcome {
        path: env.ws.relative(&target),
        width,
        height,
        script: outcome,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableAnswer {
    /// Printed output of the successful script.
    pub text: String,
    /// `name: number` lines of the output, in order of appearance.
    pub named: BTreeMap<String, f64>,
    /// Every number in the output, in order.
    pub values: Vec<f64>,
    pub script: ScriptOutcome,
}

fn number_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?").expect("number regex"))
}

fn named_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*([A-Za-z_][A-Za-z0-9_ ./()-]*?)\s*[:=]\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*$")
            .expect("named regex")
    })
}

/// Numbers in free text: `(named values, all values)`.
pub fn extract_values(text: &str) -> (BTreeMap<String, f64>, Vec<f64>) {
    let mut named = BTreeMap::new();
    for line in text.lines() {
        if let Some(c) = named_re().captures(line) {
            if let Ok(v) = c[2].parse::<f64>() {
                named.insert(c[1].trim().to_owned(), v);
            }
        }
    }
    let values = number_re()
        .find_iter(text)
        .filter_map(|m| m.as_str().parse::<f64>().ok())
        .filter(|v| v.is_finite())
        .collect();
    (named, values)
}

/// Answers a question about a CSV file by having the script writer compute
/// and print the result.
pub fn analyse_table(
    env: &ScriptEnv<'_>,
    system_prompt: &str,
    csv_path: &str,
    question: &str,
) -> Result<TableAnswer, AgentError> {
    let abs = require_file(env.ws, csv_path)?;
    let table = Table::read_csv(&abs).map_err(|e| AgentError::Precondition(format!("`{csv_path}` is not a readable CSV: {e}")))?;
    if table.headers.is_empty() || table.rows.is_empty() {
        return Err(AgentError::Precondition(format!("`{csv_path}` has no data rows")));
    }
    if question.trim().is_empty() {
        return Err(AgentError::Precondition("question is empty".into()));
    }
    let goal = format!(
        "Answer this question about the table `{csv_path}` by computing the result: {}\n\
         Print each computed value on its own line as `name: value`. If a needed column \
         does not exist, exit with an error that names the column.",
        question.trim()
    );
    let task = ScriptTask::new(goal)
        .with_context([csv_path.to_owned()])
        .with_attempts(env.max_attempts);
    let outcome = run_script_task(&task, system_prompt, env.provider, env.ws, env.profile, env.slots, env.label)?
        .into_result()?;
    let text = outcome.last().map(|a| a.stdout.clone()).unwrap_or_default();
    let (named, values) = extract_values(&text);
    Ok(TableAnswer {
        text,
        named,
        values,
        script: outcome,
    })
}

/// One vision-capable chat call with the image attached; returns the reply
/// text unchanged.
pub fn analyse_plot(
    ws: &Workspace,
    provider: &dyn ChatProvider,
    system_prompt: &str,
    image_path: &str,
    question: &str,
) -> Result<String, AgentError> {
    let abs = require_file(ws, image_path)?;
    validate_image(&abs).map_err(|e| AgentError::UnreadableImage(e.to_string()))?;
    if !provider.supports_vision() {
        return Err(AgentError::Llm(LlmError::NoVision(provider.identity().model)));
    }
    let messages = [
        ChatMessage::system(system_prompt),
        ChatMessage::user_with_images(question.trim(), vec![abs]),
    ];
    let turn = chat(provider, &messages, &[])?;
    turn.text
        .ok_or_else(|| AgentError::Llm(LlmError::Unparseable("plot analysis reply has no text".into())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_extraction() {
        let (named, values) = extract_values("max_leaf_count: 14\nmean PLA = 3.25e1\nthe rest 7");
        assert_eq!(named["max_leaf_count"], 14.0);
        assert_eq!(named["mean PLA"], 32.5);
        assert_eq!(values, vec![14.0, 32.5, 7.0]);
    }
}
