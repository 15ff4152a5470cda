use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::manifest::{
    escape_text, PipelineManifest, PipelineParam, Provenance, ScriptBinding, Step,
};
use super::PipelineError;
use crate::manager::{EventKind, SessionEvent};
use crate::registry::{ExecutedScript, ParamKind};

/// A user-designated literal that becomes a `${param}` placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub param: String,
    pub literal: Value,
    /// Required parameters carry no default; optional ones default to the literal.
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub description: Option<String>,
}

impl Binding {
    pub fn required(param: &str, literal: Value) -> Self {
        Self {
            param: param.to_owned(),
            literal,
            required: true,
            description: None,
        }
    }

    pub fn optional(param: &str, literal: Value) -> Self {
        Self {
            required: false,
            ..Self::required(param, literal)
        }
    }
}

/// Step candidates from a transcript: successful tool calls in seq order,
/// with calls that ran scripts replaced by those scripts. `skip` names tools
/// that are never part of a pipeline.
pub fn executed_steps(events: &[SessionEvent], skip: impl Fn(&str) -> bool) -> Vec<Step> {
    let mut proposed: HashMap<&str, (&str, &Value)> = HashMap::new();
    let mut steps = Vec::new();
    for e in events {
        match e.kind {
            EventKind::ToolCallProposed => {
                if let (Some(id), Some(tool)) =
                    (e.call_id(), e.payload.get("tool").and_then(Value::as_str))
                {
                    proposed.insert(
                        id,
                        (tool, e.payload.get("arguments").unwrap_or(&Value::Null)),
                    );
                }
            }
            EventKind::ToolResult => {
                if e.payload.get("status").and_then(Value::as_str) != Some("ok") {
                    continue;
                }
                let Some(&(tool, args)) = e.call_id().and_then(|id| proposed.get(id)) else {
                    continue;
                };
                if skip(tool) {
                    continue;
                }
                let scripts: Vec<ExecutedScript> = e
                    .payload
                    .get("scripts")
                    .cloned()
                    .and_then(|v| serde_json::from_value(v).ok())
                    .unwrap_or_default();
                if scripts.is_empty() {
                    steps.push(Step::tool_call(tool, args.clone()));
                } else {
                    steps.extend(scripts.into_iter().map(|s| Step::Script {
                        profile: s.profile,
                        source: s.source,
                        bindings: Vec::new(),
                        inputs: s.inputs,
                        outputs: s.outputs,
                    }));
                }
            }
            _ => {}
        }
    }
    steps
}

fn literal_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        _ => None,
    }
}

/// Rewrites a string, replacing literal occurrences outside existing
/// placeholders. Output is in template syntax.
fn templatize_str(s: &str, bindings: &[&Binding], hits: &mut [bool]) -> String {
    #[derive(Clone)]
    enum Piece {
        Text(String),
        Param(String),
    }
    let mut pieces = vec![Piece::Text(s.to_owned())];
    for (bi, b) in bindings.iter().enumerate() {
        let Some(lit) = literal_text(&b.literal) else {
            continue;
        };
        let mut next = Vec::new();
        for piece in pieces {
            match piece {
                Piece::Text(t) if t.contains(&lit) => {
                    hits[bi] = true;
                    let mut parts = t.split(lit.as_str()).peekable();
                    while let Some(part) = parts.next() {
                        if !part.is_empty() {
                            next.push(Piece::Text(part.to_owned()));
                        }
                        if parts.peek().is_some() {
                            next.push(Piece::Param(b.param.clone()));
                        }
                    }
                }
                other => next.push(other),
            }
        }
        pieces = next;
    }
    pieces
        .into_iter()
        .map(|p| match p {
            Piece::Text(t) => escape_text(&t),
            Piece::Param(p) => format!("${{{p}}}"),
        })
        .collect()
}

fn templatize_value(v: &Value, bindings: &[&Binding], hits: &mut [bool]) -> Value {
    match v {
        Value::String(s) => Value::String(templatize_str(s, bindings, hits)),
        Value::Number(n) => {
            for (bi, b) in bindings.iter().enumerate() {
                if let Value::Number(lit) = &b.literal {
                    if lit.as_f64() == n.as_f64() {
                        hits[bi] = true;
                        return Value::String(format!("${{{}}}", b.param));
                    }
                }
            }
            v.clone()
        }
        Value::Array(items) => Value::Array(
            items
                .iter()
                .map(|x| templatize_value(x, bindings, hits))
                .collect(),
        ),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, x)| (k.clone(), templatize_value(x, bindings, hits)))
                .collect(),
        ),
        other => other.clone(),
    }
}

fn param_kind(literal: &Value) -> ParamKind {
    match literal {
        Value::Number(n) if n.is_i64() || n.is_u64() => ParamKind::Integer,
        Value::Number(_) => ParamKind::Number,
        Value::Bool(_) => ParamKind::Boolean,
        Value::String(s) if s.contains('/') || s.contains('.') => ParamKind::Path,
        _ => ParamKind::String,
    }
}

/// Builds a manifest from a finished session transcript.
pub fn summarise_events(
    events: &[SessionEvent],
    session_id: &str,
    name: &str,
    description: &str,
    bindings: &[Binding],
    skip: impl Fn(&str) -> bool,
) -> Result<PipelineManifest, PipelineError> {
    match events.last().map(|e| e.kind) {
        Some(EventKind::Terminated) => {}
        _ => return Err(PipelineError::SessionNotFinished(session_id.to_owned())),
    }
    let raw = executed_steps(events, skip);
    if raw.is_empty() {
        return Err(PipelineError::NoSteps(session_id.to_owned()));
    }
    // Longest literals first so that shorter ones cannot split them.
    let mut ordered: Vec<&Binding> = bindings.iter().collect();
    ordered.sort_by_key(|b| std::cmp::Reverse(literal_text(&b.literal).map_or(0, |s| s.len())));
    let mut hits = vec![false; ordered.len()];
    let steps: Vec<Step> = raw
        .into_iter()
        .map(|step| match step {
            Step::ToolCall { tool, args } => Step::ToolCall {
                tool,
                args: templatize_value(&args, &ordered, &mut hits),
            },
            Step::Script {
                profile,
                source,
                inputs,
                outputs,
                ..
            } => {
                let mut script_bindings = Vec::new();
                for (bi, b) in ordered.iter().enumerate() {
                    if let Some(lit) = literal_text(&b.literal) {
                        if source.contains(&lit) {
                            hits[bi] = true;
                            script_bindings.push(ScriptBinding {
                                param: b.param.clone(),
                                literal: lit,
                            });
                        }
                    }
                }
                Step::Script {
                    profile,
                    source,
                    bindings: script_bindings,
                    inputs: inputs
                        .iter()
                        .map(|p| templatize_str(p, &ordered, &mut hits))
                        .collect(),
                    outputs: outputs
                        .iter()
                        .map(|p| templatize_str(p, &ordered, &mut hits))
                        .collect(),
                }
            }
        })
        .collect();
    if let Some((b, _)) = ordered.iter().zip(&hits).find(|(_, hit)| !**hit) {
        return Err(PipelineError::LiteralNotFound {
            param: b.param.clone(),
            literal: b.literal.to_string(),
        });
    }
    let params = bindings
        .iter()
        .map(|b| PipelineParam {
            name: b.param.clone(),
            kind: param_kind(&b.literal),
            description: b
                .description
                .clone()
                .unwrap_or_else(|| format!("originally {}", b.literal)),
            required: b.required,
            default: (!b.required).then(|| b.literal.clone()),
        })
        .collect();
    let mut manifest = PipelineManifest::new(name, description, params, steps);
    manifest.provenance = Some(Provenance {
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        source_session: Some(session_id.to_owned()),
    });
    manifest.validate()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn ev(seq: u64, kind: EventKind, payload: Value) -> SessionEvent {
        SessionEvent {
            seq,
            kind,
            payload,
            timestamp: String::new(),
        }
    }

    fn transcript() -> Vec<SessionEvent> {
        vec![
            ev(0, EventKind::SessionStarted, json!({})),
            ev(1, EventKind::UserMessage, json!({"text": "go"})),
            ev(2, EventKind::Plan, json!({"text": "plan"})),
            ev(
                3,
                EventKind::ToolCallProposed,
                json!({"call_id": "a", "tool": "seg", "arguments": {"out": "./res/x"}}),
            ),
            ev(4, EventKind::ToolCallStarted, json!({"call_id": "a"})),
            ev(
                5,
                EventKind::ToolResult,
                json!({"call_id": "a", "status": "error"}),
            ),
            ev(
                6,
                EventKind::ToolCallProposed,
                json!({"call_id": "b", "tool": "seg", "arguments": {"out": "./res/y", "scale": 0.03}}),
            ),
            ev(7, EventKind::ToolCallStarted, json!({"call_id": "b"})),
            ev(
                8,
                EventKind::ToolResult,
                json!({"call_id": "b", "status": "ok"}),
            ),
            ev(
                9,
                EventKind::ToolCallProposed,
                json!({"call_id": "c", "tool": "coding", "arguments": {"message": "m"}}),
            ),
            ev(10, EventKind::ToolCallStarted, json!({"call_id": "c"})),
            ev(
                11,
                EventKind::ToolResult,
                json!({"call_id": "c", "status": "ok", "scripts": [
                    {"profile": "python", "source": "open('./res/y/a.csv')", "inputs": ["./res/y/a.csv"], "outputs": []}
                ]}),
            ),
            ev(12, EventKind::Summary, json!({"text": "done"})),
            ev(13, EventKind::Terminated, json!({"reason": "completed"})),
        ]
    }

    #[test]
    fn failed_calls_dropped_scripts_inlined() {
        let m = summarise_events(
            &transcript(),
            "s1",
            "demo",
            "d",
            &[
                Binding::required("out", json!("./res")),
                Binding::optional("scale", json!(0.03)),
            ],
            |_| false,
        )
        .unwrap();
        assert_eq!(m.steps.len(), 2);
        match &m.steps[0] {
            Step::ToolCall { args, .. } => {
                assert_eq!(args["out"], "${out}/y");
                assert_eq!(args["scale"], "${scale}");
            }
            other => panic!("{other:?}"),
        }
        match &m.steps[1] {
            Step::Script {
                bindings,
                inputs,
                source,
                ..
            } => {
                assert_eq!(source, "open('./res/y/a.csv')");
                assert_eq!(bindings[0].literal, "./res");
                assert_eq!(inputs[0], "${out}/y/a.csv");
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(m.param("scale").unwrap().default, Some(json!(0.03)));
        assert!(m.param("out").unwrap().default.is_none());
    }

    #[test]
    fn errors() {
        let t = transcript();
        assert!(matches!(
            summarise_events(
                &t,
                "s",
                "demo",
                "d",
                &[Binding::required("p", json!("nowhere"))],
                |_| false
            ),
            Err(PipelineError::LiteralNotFound { .. })
        ));
        assert!(matches!(
            summarise_events(&t[..12], "s", "demo", "d", &[], |_| false),
            Err(PipelineError::SessionNotFinished(_))
        ));
        assert!(matches!(
            summarise_events(&t, "s", "demo", "d", &[], |_| true),
            Err(PipelineError::NoSteps(_))
        ));
    }
}
