use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::manifest::{parse_template, PipelineManifest, Segment, Step};
use super::PipelineError;
use crate::registry::ToolOutput;

/// Tool that executes a recorded script verbatim.
pub const SCRIPT_TOOL: &str = "run_script";

/// Executes resolved steps; implemented by the session manager (which logs
/// events) and by direct registry dispatch.
pub trait StepRunner {
    fn run_tool(&mut self, step: usize, tool: &str, args: &Value) -> Result<ToolOutput, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Succeeded,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// 1-based.
    pub index: usize,
    pub name: String,
    pub status: StepStatus,
    #[serde(default)]
    pub artifacts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub pipeline: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_step: Option<usize>,
    pub steps: Vec<StepReport>,
}

impl ReplayReport {
    pub fn artifacts(&self) -> Vec<String> {
        let mut all: Vec<String> = self
            .steps
            .iter()
            .flat_map(|s| s.artifacts.clone())
            .collect();
        all.sort();
        all.dedup();
        all
    }
}

/// Checks caller arguments against the declared parameters and fills defaults.
pub fn bind_arguments(
    manifest: &PipelineManifest,
    args: &Value,
) -> Result<BTreeMap<String, Value>, PipelineError> {
    let empty = Map::new();
    let given = match args {
        Value::Object(m) => m,
        Value::Null => &empty,
        _ => {
            return Err(PipelineError::BadArgument(
                "arguments must be an object".into(),
            ))
        }
    };
    if let Some(unknown) = given.keys().find(|k| manifest.param(k).is_none()) {
        return Err(PipelineError::BadArgument(format!(
            "`{unknown}` is not a parameter of `{}`",
            manifest.name
        )));
    }
    let mut bound = BTreeMap::new();
    for p in &manifest.params {
        let value = match (given.get(&p.name), &p.default) {
            (Some(v), _) if !v.is_null() => v.clone(),
            (_, Some(d)) => d.clone(),
            _ => return Err(PipelineError::MissingParam(p.name.clone())),
        };
        if value.is_object() || value.is_array() {
            return Err(PipelineError::BadArgument(format!(
                "`{}` must be a scalar",
                p.name
            )));
        }
        bound.insert(p.name.clone(), value);
    }
    Ok(bound)
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn substitute_str(s: &str, bound: &BTreeMap<String, Value>) -> Result<Value, PipelineError> {
    let segs = parse_template(s)?;
    let lookup = |p: &str| {
        bound
            .get(p)
            .ok_or_else(|| PipelineError::MissingParam(p.to_owned()))
    };
    if let [Segment::Param(p)] = segs.as_slice() {
        return Ok(lookup(p)?.clone());
    }
    let mut out = String::new();
    for seg in segs {
        match seg {
            Segment::Text(t) => out.push_str(&t),
            Segment::Param(p) => out.push_str(&scalar_text(lookup(&p)?)),
        }
    }
    Ok(Value::String(out))
}

/// Replaces placeholders; a string that is exactly one placeholder takes the
/// parameter's JSON type.
pub fn substitute(v: &Value, bound: &BTreeMap<String, Value>) -> Result<Value, PipelineError> {
    Ok(match v {
        Value::String(s) => substitute_str(s, bound)?,
        Value::Array(items) => Value::Array(
            items
                .iter()
                .map(|x| substitute(x, bound))
                .collect::<Result<_, _>>()?,
        ),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, x)| Ok((k.clone(), substitute(x, bound)?)))
                .collect::<Result<_, PipelineError>>()?,
        ),
        other => other.clone(),
    })
}

/// The concrete tool call a step turns into for the given arguments.
pub fn resolve_step(
    step: &Step,
    bound: &BTreeMap<String, Value>,
) -> Result<(String, Value), PipelineError> {
    match step {
        Step::ToolCall { tool, args } => Ok((tool.clone(), substitute(args, bound)?)),
        Step::Script {
            profile,
            source,
            bindings,
            inputs,
            outputs,
        } => {
            let mut text = source.clone();
            for b in bindings {
                let value = bound
                    .get(&b.param)
                    .ok_or_else(|| PipelineError::MissingParam(b.param.clone()))?;
                text = text.replace(&b.literal, &scalar_text(value));
            }
            let paths = |list: &[String]| -> Result<Vec<String>, PipelineError> {
                list.iter()
                    .map(|p| substitute_str(p, bound).map(|v| scalar_text(&v)))
                    .collect()
            };
            Ok((
                SCRIPT_TOOL.to_owned(),
                json!({
                    "source": text,
                    "profile": profile,
                    "inputs": paths(inputs)?,
                    "outputs": paths(outputs)?,
                }),
            ))
        }
    }
}

/// Runs every step in order, stopping at the first failure. Parameters and
/// tool availability are checked before anything executes.
pub fn replay_manifest(
    manifest: &PipelineManifest,
    args: &Value,
    tool_exists: impl Fn(&str) -> bool,
    runner: &mut dyn StepRunner,
) -> Result<ReplayReport, PipelineError> {
    manifest.validate()?;
    let bound = bind_arguments(manifest, args)?;
    let mut resolved = Vec::with_capacity(manifest.steps.len());
    for (i, step) in manifest.steps.iter().enumerate() {
        let (tool, call_args) = resolve_step(step, &bound)?;
        if !tool_exists(&tool) {
            return Err(PipelineError::UnknownTool { step: i + 1, tool });
        }
        resolved.push((tool, call_args));
    }
    let mut report = ReplayReport {
        pipeline: manifest.name.clone(),
        ok: true,
        failed_step: None,
        steps: Vec::new(),
    };
    for (i, (tool, call_args)) in resolved.iter().enumerate() {
        let index = i + 1;
        let name = manifest.steps[i].label().to_owned();
        if !report.ok {
            report.steps.push(StepReport {
                index,
                name,
                status: StepStatus::Skipped,
                artifacts: Vec::new(),
                error: None,
            });
            continue;
        }
        match runner.run_tool(index, tool, call_args) {
            Ok(out) => report.steps.push(StepReport {
                index,
                name,
                status: StepStatus::Succeeded,
                artifacts: out.artifacts,
                error: None,
            }),
            Err(e) => {
                tracing::warn!(pipeline = %manifest.name, step = index, "replay step failed");
                report.ok = false;
                report.failed_step = Some(index);
                report.steps.push(StepReport {
                    index,
                    name,
                    status: StepStatus::Failed,
                    artifacts: Vec::new(),
                    error: Some(e),
                });
            }
        }
    }
    Ok(report)
}
