use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SessionStarted,
    UserMessage,
    Plan,
    AssistantMessage,
    ToolCallProposed,
    ApprovalRequested,
    ApprovalResolved,
    ToolCallStarted,
    ToolResult,
    ArtifactCreated,
    Summary,
    Terminated,
    Error,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::SessionStarted => "session_started",
            EventKind::UserMessage => "user_message",
            EventKind::Plan => "plan",
            EventKind::AssistantMessage => "assistant_message",
            EventKind::ToolCallProposed => "tool_call_proposed",
            EventKind::ApprovalRequested => "approval_requested",
            EventKind::ApprovalResolved => "approval_resolved",
            EventKind::ToolCallStarted => "tool_call_started",
            EventKind::ToolResult => "tool_result",
            EventKind::ArtifactCreated => "artifact_created",
            EventKind::Summary => "summary",
            EventKind::Terminated => "terminated",
            EventKind::Error => "error",
        }
    }

    pub fn ends_run(self) -> bool {
        matches!(self, EventKind::Terminated | EventKind::Error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub payload: Value,
    /// RFC 3339, UTC.
    pub timestamp: String,
}

impl SessionEvent {
    pub fn call_id(&self) -> Option<&str> {
        self.payload.get("call_id").and_then(Value::as_str)
    }

    /// The event with its timestamp blanked, for determinism comparisons.
    pub fn without_timestamp(&self) -> SessionEvent {
        SessionEvent {
            timestamp: String::new(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
enum CallStage {
    #[default]
    None,
    Proposed,
    Requested,
    Approved,
    Rejected,
    Started,
    Done,
}

/// Checks the ordering rules every transcript obeys. `gated_tools` lists
/// tools that may only start after an approving `approval_resolved`.
pub fn check_event_order(
    events: &[SessionEvent],
    gated_tools: &HashSet<String>,
) -> Result<(), String> {
    let mut last_seq: Option<u64> = None;
    // (stage, tool, arguments flagged invalid at proposal)
    let mut calls: HashMap<String, (CallStage, String, bool)> = HashMap::new();
    let mut in_run = false;
    let mut planned = false;
    for (i, e) in events.iter().enumerate() {
        let at = |msg: String| format!("event {i} (seq {}, {}): {msg}", e.seq, e.kind.as_str());
        if let Some(prev) = last_seq {
            if e.seq <= prev {
                return Err(at(format!("seq not increasing after {prev}")));
            }
        }
        last_seq = Some(e.seq);
        match e.kind {
            EventKind::SessionStarted => {
                if i != 0 || e.seq != 0 {
                    return Err(at("session_started must be event 0".into()));
                }
            }
            EventKind::UserMessage => {
                if in_run {
                    return Err(at("user message inside a running run".into()));
                }
                in_run = true;
                planned = false;
            }
            _ if !in_run => return Err(at("event outside a run".into())),
            EventKind::Plan => planned = true,
            EventKind::ToolCallProposed => {
                if !planned {
                    return Err(at("tool call proposed before the plan".into()));
                }
                let id = e.call_id().ok_or_else(|| at("missing call_id".into()))?;
                let tool = e.payload.get("tool").and_then(Value::as_str).unwrap_or("");
                if calls.contains_key(id) {
                    return Err(at(format!("call `{id}` proposed twice")));
                }
                let invalid = e.payload.get("invalid").is_some_and(|v| !v.is_null());
                calls.insert(id.to_owned(), (CallStage::Proposed, tool.to_owned(), invalid));
            }
            EventKind::ApprovalRequested
            | EventKind::ApprovalResolved
            | EventKind::ToolCallStarted
            | EventKind::ToolResult => {
                let id = e.call_id().ok_or_else(|| at("missing call_id".into()))?;
                let (stage, tool, invalid) = calls
                    .get_mut(id)
                    .ok_or_else(|| at(format!("call `{id}` was never proposed")))?;
                let next = match (e.kind, *stage) {
                    (EventKind::ApprovalRequested, CallStage::Proposed) => CallStage::Requested,
                    (EventKind::ApprovalResolved, CallStage::Requested) => {
                        match e.payload.get("decision").and_then(Value::as_str) {
                            Some("approve") => CallStage::Approved,
                            Some("reject") => CallStage::Rejected,
                            _ => return Err(at("decision must be approve or reject".into())),
                        }
                    }
                    (EventKind::ToolCallStarted, CallStage::Proposed)
                        if gated_tools.contains(tool.as_str()) =>
                    {
                        return Err(at(format!("gated call `{id}` started without approval")))
                    }
                    (EventKind::ToolCallStarted, CallStage::Proposed | CallStage::Approved) => {
                        CallStage::Started
                    }
                    (EventKind::ToolResult, CallStage::Started | CallStage::Rejected) => {
                        CallStage::Done
                    }
                    // Invalid calls are answered without running.
                    (EventKind::ToolResult, CallStage::Proposed) if *invalid => CallStage::Done,
                    (kind, stage) => {
                        return Err(at(format!(
                            "{} not allowed for call `{id}` at stage {stage:?}",
                            kind.as_str()
                        )))
                    }
                };
                *stage = next;
            }
            EventKind::Terminated | EventKind::Error => {
                in_run = false;
            }
            _ => {}
        }
    }
    Ok(())
}

/// Events grouped into runs, each starting at a user message.
pub fn runs(events: &[SessionEvent]) -> Vec<&[SessionEvent]> {
    let starts: Vec<usize> = events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == EventKind::UserMessage)
        .map(|(i, _)| i)
        .collect();
    starts
        .iter()
        .enumerate()
        .map(|(n, &s)| {
            let end = starts.get(n + 1).copied().unwrap_or(events.len());
            &events[s..end]
        })
        .collect()
}
