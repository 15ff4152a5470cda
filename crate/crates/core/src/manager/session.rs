use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::policy::ApprovalPolicy;
use super::store::SessionStore;
use super::{EventKind, ManagerError, SessionEvent};
use crate::agents::has_terminate;
use crate::config::DEFAULT_MAX_TURNS;
use crate::llm::{chat, ChatMessage, ChatProvider, FinishReason, ToolCallRequest};
use crate::pipeline::{
    bind_arguments, replay_manifest, resolve_step, summarise_events, Binding, PipelineManifest,
    ReplayReport, StepRunner,
};
use crate::registry::{ToolOutput, ToolRegistry};
use crate::toolkit::{default_registry, dispatch, finished_events, is_pipeline_tool, Services, ToolContext, ToolkitError};
use crate::workspace::Workspace;

/// Tool results whose serialized form exceeds this many bytes are written to
/// `tool_outputs/` and only summarised in the conversation.
pub const SPILL_BYTES: usize = 8 * 1024;
const SPILL_DIR: &str = "tool_outputs";
const SPILL_PREVIEW_LINES: usize = 20;

/// Receives every event right after it has been persisted.
pub trait EventObserver: Send + Sync {
    fn on_event(&self, session_id: &str, event: &SessionEvent);
}

#[derive(Clone)]
pub struct SessionConfig {
    pub provider: Arc<dyn ChatProvider>,
    pub approval: ApprovalPolicy,
    pub max_turns: usize,
    /// Working directory; `{store_root}/{id}/artifacts` when absent.
    pub workdir: Option<PathBuf>,
}

impl std::fmt::Debug for SessionConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionConfig")
            .field("provider", &self.provider.identity())
            .field("approval", &self.approval)
            .field("max_turns", &self.max_turns)
            .field("workdir", &self.workdir)
            .finish()
    }
}

impl SessionConfig {
    pub fn new(provider: Arc<dyn ChatProvider>) -> Self {
        Self {
            provider,
            approval: ApprovalPolicy::auto(),
            max_turns: DEFAULT_MAX_TURNS,
            workdir: None,
        }
    }

    pub fn with_approval(mut self, approval: ApprovalPolicy) -> Self {
        self.approval = approval;
        self
    }

    pub fn with_max_turns(mut self, max_turns: usize) -> Self {
        self.max_turns = max_turns;
        self
    }

    pub fn with_workdir(mut self, workdir: impl Into<PathBuf>) -> Self {
        self.workdir = Some(workdir.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Idle,
    AwaitingApproval,
    Running,
    Terminated,
    Failed,
}

impl SessionStatus {
    fn accepts_new_run(self) -> bool {
        matches!(self, SessionStatus::Idle | SessionStatus::Terminated | SessionStatus::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Reject,
}

impl std::str::FromStr for Decision {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "approve" => Ok(Decision::Approve),
            "reject" => Ok(Decision::Reject),
            other => Err(format!("decision must be approve or reject, got `{other}`")),
        }
    }
}

#[derive(Default)]
struct Run {
    turns: usize,
    planned: bool,
    pending: VecDeque<ToolCallRequest>,
    awaiting: Option<String>,
    approved: HashSet<String>,
    /// Summary text when the terminate token arrived together with calls.
    terminate_after: Option<String>,
}

struct Emitter {
    session_id: String,
    store: SessionStore,
    observers: Arc<RwLock<Vec<Arc<dyn EventObserver>>>>,
    next_seq: u64,
}

impl Emitter {
    fn emit(&mut self, kind: EventKind, payload: Value) -> Result<SessionEvent, ManagerError> {
        let event = SessionEvent {
            seq: self.next_seq,
            kind,
            payload,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        };
        self.store.append(&self.session_id, &event)?;
        self.next_seq += 1;
        for o in self.observers.read().expect("observers poisoned").iter() {
            o.on_event(&self.session_id, &event);
        }
        Ok(event)
    }
}

struct Session {
    id: String,
    workspace: Workspace,
    provider: Arc<dyn ChatProvider>,
    policy: ApprovalPolicy,
    max_turns: usize,
    status: SessionStatus,
    conversation: Vec<ChatMessage>,
    run: Option<Run>,
    replays: usize,
    emitter: Emitter,
}

fn strip_terminate(text: &str) -> String {
    let kept: Vec<&str> = text
        .split_inclusive(char::is_whitespace)
        .filter(|w| {
            let core = w.trim().trim_matches(|c: char| !c.is_ascii_alphanumeric() && c != '_');
            core != crate::agents::TERMINATE
        })
        .collect();
    kept.concat().trim().to_owned()
}

fn first_lines(text: &str, n: usize) -> String {
    text.lines().take(n).collect::<Vec<_>>().join("\n")
}

/// Runs one session's tool calls through the shared registry.
struct Env<'a> {
    services: &'a Services,
    registry: &'a ToolRegistry,
}

impl Session {
    fn emit(&mut self, kind: EventKind, payload: Value) -> Result<(), ManagerError> {
        self.emitter.emit(kind, payload).map(|_| ())
    }

    fn run_mut(&mut self) -> &mut Run {
        self.run.as_mut().expect("active run")
    }

    fn invoke(&self, env: &Env<'_>, call_id: &str, tool: &str, args: &Value) -> Result<ToolOutput, String> {
        let ctx = ToolContext {
            session_id: &self.id,
            call_id,
            workspace: &self.workspace,
            provider: self.provider.as_ref(),
            services: env.services,
            registry: env.registry,
        };
        match catch_unwind(AssertUnwindSafe(|| dispatch(&ctx, tool, args))) {
            Ok(r) => r,
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "unknown panic".into());
                Err(format!("tool `{tool}` panicked: {msg}"))
            }
        }
    }

    /// Persists a tool outcome and returns the text the model sees.
    fn record_result(
        &mut self,
        call_id: &str,
        tool: &str,
        result: Result<ToolOutput, String>,
    ) -> Result<String, ManagerError> {
        let (mut payload, content, artifacts) = match result {
            Ok(out) => {
                let content = serde_json::to_string(&json!({
                    "status": "ok",
                    "output": out.value,
                    "artifacts": out.artifacts,
                }))
                .unwrap_or_default();
                let payload = json!({
                    "call_id": call_id,
                    "tool": tool,
                    "status": "ok",
                    "output": out.value,
                    "artifacts": out.artifacts,
                    "scripts": out.scripts,
                });
                (payload, content, out.artifacts)
            }
            Err(e) => {
                let content = serde_json::to_string(&json!({"status": "error", "error": e})).unwrap_or_default();
                let payload = json!({
                    "call_id": call_id,
                    "tool": tool,
                    "status": "error",
                    "error": e,
                    "artifacts": [],
                    "scripts": [],
                });
                (payload, content, Vec::new())
            }
        };
        let mut artifacts = artifacts;
        let mut content = content;
        if content.len() > SPILL_BYTES {
            let safe: String = call_id
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect();
            let rel = format!("{SPILL_DIR}/{safe}.json");
            let abs = self.workspace.resolve(&rel).map_err(|e| ManagerError::Workspace(e.to_string()))?;
            std::fs::create_dir_all(abs.parent().expect("spill dir"))
                .and_then(|_| {
                    let pretty = serde_json::from_str::<Value>(&content)
                        .ok()
                        .and_then(|v| serde_json::to_string_pretty(&v).ok())
                        .unwrap_or_else(|| content.clone());
                    std::fs::write(&abs, pretty)
                })
                .map_err(|e| ManagerError::Workspace(format!("{}: {e}", abs.display())))?;
            let preview = first_lines(&std::fs::read_to_string(&abs).unwrap_or_default(), SPILL_PREVIEW_LINES);
            content = format!(
                "The result of `{tool}` is {} bytes and was saved to `{rel}`. First lines:\n{preview}",
                content.len()
            );
            payload["spilled"] = json!(rel);
            payload.as_object_mut().expect("payload object").remove("output");
            artifacts.push(rel);
        }
        payload["artifacts"] = json!(artifacts);
        self.emit(EventKind::ToolResult, payload)?;
        for path in artifacts {
            self.emit(EventKind::ArtifactCreated, json!({"call_id": call_id, "path": path}))?;
        }
        Ok(content)
    }

    fn execute_call(&mut self, env: &Env<'_>, call: &ToolCallRequest) -> Result<(), ManagerError> {
        self.emit(EventKind::ToolCallStarted, json!({"call_id": call.id, "tool": call.name}))?;
        let result = self.invoke(env, &call.id, &call.name, &call.arguments);
        let content = self.record_result(&call.id, &call.name, result)?;
        self.conversation.push(ChatMessage::tool(&call.id, content));
        Ok(())
    }

    fn finish_completed(&mut self, summary: String) -> Result<SessionStatus, ManagerError> {
        self.emit(EventKind::Summary, json!({"text": summary}))?;
        self.emit(EventKind::Terminated, json!({"reason": "completed"}))?;
        self.run = None;
        self.status = SessionStatus::Terminated;
        Ok(self.status)
    }

    fn fail(&mut self, message: String) -> Result<SessionStatus, ManagerError> {
        tracing::warn!(session = %self.id, %message, "run failed");
        self.emit(EventKind::Error, json!({"message": message}))?;
        self.run = None;
        self.status = SessionStatus::Failed;
        Ok(self.status)
    }

    /// Advances the run until it ends or needs a decision.
    fn drive(&mut self, env: &Env<'_>) -> Result<SessionStatus, ManagerError> {
        loop {
            while let Some(call) = self.run_mut().pending.front().cloned() {
                if let Some(problem) = &call.invalid {
                    let content =
                        self.record_result(&call.id, &call.name, Err(format!("invalid call: {problem}")))?;
                    self.conversation.push(ChatMessage::tool(&call.id, content));
                    self.run_mut().pending.pop_front();
                    continue;
                }
                let needs_approval = env
                    .registry
                    .get(&call.name)
                    .is_some_and(|t| self.policy.requires_approval(&t.spec));
                if needs_approval && !self.run_mut().approved.contains(&call.id) {
                    let category = env.registry.get(&call.name).map(|t| t.spec.category);
                    self.run_mut().awaiting = Some(call.id.clone());
                    self.emit(
                        EventKind::ApprovalRequested,
                        json!({"call_id": call.id, "tool": call.name, "category": category}),
                    )?;
                    self.status = SessionStatus::AwaitingApproval;
                    return Ok(self.status);
                }
                self.execute_call(env, &call)?;
                self.run_mut().pending.pop_front();
            }
            if let Some(summary) = self.run_mut().terminate_after.take() {
                return self.finish_completed(summary);
            }
            if self.run_mut().turns >= self.max_turns {
                return self.fail(format!("max_turns ({}) exceeded", self.max_turns));
            }
            let tools = env.registry.list_tools();
            let turn = match chat(self.provider.as_ref(), &self.conversation, &tools) {
                Ok(t) => t,
                Err(e) => return self.fail(format!("provider error: {e}")),
            };
            if turn.finish == FinishReason::Error {
                return self.fail(format!(
                    "provider reported an error: {}",
                    turn.text.as_deref().unwrap_or("no detail")
                ));
            }
            let run = self.run_mut();
            run.turns += 1;
            let first = !run.planned;
            run.planned = true;
            let text = turn.text.clone().filter(|t| !t.trim().is_empty());
            let terminate = text.as_deref().is_some_and(has_terminate);
            if first {
                let plan = text.clone().unwrap_or_else(|| {
                    let names: Vec<&str> = turn.tool_calls.iter().map(|c| c.name.as_str()).collect();
                    format!("Call {}.", names.join(", then "))
                });
                self.emit(EventKind::Plan, json!({"text": plan}))?;
            } else if let Some(t) = &text {
                if !terminate {
                    self.emit(EventKind::AssistantMessage, json!({"text": t}))?;
                }
            }
            self.conversation
                .push(ChatMessage::assistant(turn.text.clone(), turn.tool_calls.clone()));
            if turn.tool_calls.is_empty() {
                if terminate {
                    return self.finish_completed(strip_terminate(text.as_deref().unwrap_or("")));
                }
                if first {
                    if let Some(t) = &text {
                        self.emit(EventKind::AssistantMessage, json!({"text": t}))?;
                    }
                }
                self.emit(EventKind::Terminated, json!({"reason": "awaiting_user"}))?;
                self.run = None;
                self.status = SessionStatus::Terminated;
                return Ok(self.status);
            }
            for call in &turn.tool_calls {
                let mut payload = json!({"call_id": call.id, "tool": call.name, "arguments": call.arguments});
                if let Some(problem) = &call.invalid {
                    payload["invalid"] = json!(problem);
                }
                self.emit(EventKind::ToolCallProposed, payload)?;
            }
            let run = self.run_mut();
            run.pending = turn.tool_calls.into();
            if terminate {
                run.terminate_after = Some(strip_terminate(text.as_deref().unwrap_or("")));
            }
        }
    }
}

/// Step runner that logs each pipeline step as a tool call of the session.
struct ReplayRunner<'a, 'b> {
    session: &'a mut Session,
    env: &'a Env<'b>,
}

impl StepRunner for ReplayRunner<'_, '_> {
    fn run_tool(&mut self, _step: usize, tool: &str, args: &Value) -> Result<ToolOutput, String> {
        let s = &mut *self.session;
        s.replays += 1;
        let call_id = format!("replay-{}", s.replays);
        let log = |r: Result<(), ManagerError>| r.map_err(|e| e.to_string());
        log(s.emit(EventKind::ToolCallProposed, json!({"call_id": call_id, "tool": tool, "arguments": args})))?;
        let gated = self
            .env
            .registry
            .get(tool)
            .is_some_and(|t| s.policy.requires_approval(&t.spec));
        if gated {
            let category = self.env.registry.get(tool).map(|t| t.spec.category);
            log(s.emit(EventKind::ApprovalRequested, json!({"call_id": call_id, "tool": tool, "category": category})))?;
            log(s.emit(
                EventKind::ApprovalResolved,
                json!({"call_id": call_id, "decision": "approve", "note": "approved by the replay request"}),
            ))?;
        }
        log(s.emit(EventKind::ToolCallStarted, json!({"call_id": call_id, "tool": tool})))?;
        let result = s.invoke(self.env, &call_id, tool, args);
        let kept = result.clone();
        log(s.record_result(&call_id, tool, result).map(|_| ()))?;
        kept
    }
}

/// Owns the sessions and drives their runs.
pub struct Manager {
    services: Arc<Services>,
    registry: Arc<ToolRegistry>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    observers: Arc<RwLock<Vec<Arc<dyn EventObserver>>>>,
}

impl std::fmt::Debug for Manager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Manager")
            .field("services", &self.services)
            .field("tools", &self.registry.len())
            .finish_non_exhaustive()
    }
}

impl Manager {
    pub fn new(services: Arc<Services>, registry: Arc<ToolRegistry>) -> Self {
        Self {
            services,
            registry,
            sessions: Mutex::new(HashMap::new()),
            observers: Arc::new(RwLock::new(Vec::new())),
        }
    }

    /// Default services and tools below `store_root`.
    pub fn open(store_root: impl Into<PathBuf>) -> Result<Self, ToolkitError> {
        Ok(Self::new(
            Arc::new(Services::open(store_root)?),
            Arc::new(default_registry()),
        ))
    }

    pub fn services(&self) -> &Arc<Services> {
        &self.services
    }

    pub fn registry(&self) -> &Arc<ToolRegistry> {
        &self.registry
    }

    pub fn store(&self) -> &SessionStore {
        &self.services.sessions
    }

    pub fn add_observer(&self, observer: Arc<dyn EventObserver>) {
        self.observers.write().expect("observers poisoned").push(observer);
    }

    fn env(&self) -> Env<'_> {
        Env {
            services: &self.services,
            registry: &self.registry,
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ManagerError> {
        self.sessions
            .lock()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ManagerError::UnknownSession(id.to_owned()))
    }

    fn with_session<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<T, ManagerError>,
    ) -> Result<T, ManagerError> {
        let handle = self.session(id)?;
        let mut guard = match handle.try_lock() {
            Ok(g) => g,
            Err(std::sync::TryLockError::WouldBlock) => return Err(ManagerError::Busy(id.to_owned())),
            Err(std::sync::TryLockError::Poisoned(p)) => p.into_inner(),
        };
        f(&mut guard)
    }

    /// Creates a session and records its configuration as event 0.
    pub fn start_session(&self, config: SessionConfig) -> Result<String, ManagerError> {
        if config.max_turns == 0 {
            return Err(ManagerError::InvalidState("max_turns must be at least 1".into()));
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let store = self.services.sessions.clone();
        let dir = store.session_dir(&id)?;
        std::fs::create_dir_all(&dir)
            .map_err(|e| ManagerError::Workspace(format!("{}: {e}", dir.display())))?;
        let (root, shown) = match &config.workdir {
            Some(w) => (w.clone(), json!(w.display().to_string())),
            None => (store.artifacts_dir(&id)?, json!(super::store::ARTIFACTS_DIR)),
        };
        let workspace = Workspace::create(&root).map_err(|e| ManagerError::Workspace(e.to_string()))?;
        let mut session = Session {
            id: id.clone(),
            workspace,
            provider: config.provider.clone(),
            policy: config.approval.clone(),
            max_turns: config.max_turns,
            status: SessionStatus::Idle,
            conversation: Vec::new(),
            run: None,
            replays: 0,
            emitter: Emitter {
                session_id: id.clone(),
                store,
                observers: Arc::clone(&self.observers),
                next_seq: 0,
            },
        };
        session.emit(
            EventKind::SessionStarted,
            json!({"config": {
                "provider": config.provider.identity(),
                "approval": config.approval,
                "max_turns": config.max_turns,
                "workdir": shown,
            }}),
        )?;
        tracing::info!(session = %id, "session started");
        self.sessions
            .lock()
            .expect("session table poisoned")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    /// Starts a run with a user message and drives it until it terminates,
    /// fails, or waits for an approval.
    pub fn submit_user_message(
        &self,
        id: &str,
        text: &str,
        attachments: &[String],
    ) -> Result<SessionStatus, ManagerError> {
        if text.trim().is_empty() {
            return Err(ManagerError::EmptyMessage);
        }
        let env = self.env();
        self.with_session(id, |s| {
            if !s.status.accepts_new_run() {
                return Err(ManagerError::InvalidState(format!(
                    "session is {:?}; a new message needs an idle or finished session",
                    s.status
                )));
            }
            let mut images = Vec::new();
            for a in attachments {
                let p = s.workspace.resolve(a).map_err(|e| ManagerError::Workspace(e.to_string()))?;
                if !p.is_file() {
                    return Err(ManagerError::Workspace(format!("attachment `{a}` does not exist")));
                }
                images.push(p);
            }
            if s.conversation.is_empty() {
                s.conversation.push(ChatMessage::system(&env.services.prompts.manager));
            }
            s.conversation.push(if images.is_empty() {
                ChatMessage::user(text)
            } else {
                ChatMessage::user_with_images(text, images)
            });
            s.emit(EventKind::UserMessage, json!({"text": text, "attachments": attachments}))?;
            s.run = Some(Run::default());
            s.status = SessionStatus::Running;
            s.drive(&env)
        })
    }

    /// Answers the approval the session is waiting for and continues the run.
    pub fn resolve_approval(
        &self,
        id: &str,
        call_id: &str,
        decision: Decision,
        note: Option<&str>,
    ) -> Result<SessionStatus, ManagerError> {
        let env = self.env();
        self.with_session(id, |s| {
            let awaiting = s.run.as_ref().and_then(|r| r.awaiting.clone());
            let Some(waiting_for) = awaiting.filter(|_| s.status == SessionStatus::AwaitingApproval) else {
                let known = s.store_knows_call(call_id);
                return Err(if known {
                    ManagerError::NotAwaiting(call_id.to_owned())
                } else {
                    ManagerError::UnknownCall(call_id.to_owned())
                });
            };
            if waiting_for != call_id {
                return Err(if s.run_mut().pending.iter().any(|c| c.id == call_id) || s.store_knows_call(call_id) {
                    ManagerError::NotAwaiting(call_id.to_owned())
                } else {
                    ManagerError::UnknownCall(call_id.to_owned())
                });
            }
            let mut payload = json!({"call_id": call_id, "decision": decision});
            if let Some(n) = note {
                payload["note"] = json!(n);
            }
            s.emit(EventKind::ApprovalResolved, payload)?;
            s.run_mut().awaiting = None;
            s.status = SessionStatus::Running;
            match decision {
                Decision::Approve => {
                    s.run_mut().approved.insert(call_id.to_owned());
                }
                Decision::Reject => {
                    let call = s.run_mut().pending.pop_front().expect("awaited call is pending");
                    let mut payload = json!({
                        "call_id": call.id,
                        "tool": call.name,
                        "status": "rejected",
                        "artifacts": [],
                        "scripts": [],
                    });
                    let mut content = "The user rejected this call.".to_owned();
                    if let Some(n) = note {
                        payload["note"] = json!(n);
                        content.push_str(&format!(" Note from the user: {n}"));
                    }
                    s.emit(EventKind::ToolResult, payload)?;
                    s.conversation.push(ChatMessage::tool(&call.id, content));
                }
            }
            s.drive(&env)
        })
    }

    pub fn status(&self, id: &str) -> Result<SessionStatus, ManagerError> {
        let handle = self.session(id)?;
        let status = match handle.try_lock() {
            Ok(g) => g.status,
            Err(_) => SessionStatus::Running,
        };
        Ok(status)
    }

    /// The call a session is waiting on, if any.
    pub fn pending_approval(&self, id: &str) -> Result<Option<String>, ManagerError> {
        let handle = self.session(id)?;
        let guard = handle.lock().unwrap_or_else(|p| p.into_inner());
        Ok(guard.run.as_ref().and_then(|r| r.awaiting.clone()))
    }

    pub fn workspace(&self, id: &str) -> Result<Workspace, ManagerError> {
        let handle = self.session(id)?;
        let guard = handle.lock().unwrap_or_else(|p| p.into_inner());
        Ok(guard.workspace.clone())
    }

    /// Persisted events with `seq >= from_seq`; works for sessions of
    /// earlier processes too.
    pub fn events(&self, id: &str, from_seq: u64) -> Result<Vec<SessionEvent>, ManagerError> {
        self.services.sessions.read_events(id, from_seq)
    }

    /// Checks the persisted transcript against the ordering rules under the
    /// session's approval policy.
    pub fn check_transcript(&self, id: &str) -> Result<(), String> {
        let handle = self.session(id).map_err(|e| e.to_string())?;
        let policy = handle.lock().unwrap_or_else(|p| p.into_inner()).policy.clone();
        let events = self.events(id, 0).map_err(|e| e.to_string())?;
        super::check_event_order(&events, &policy.gated_tools(&self.registry.list_tools()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.lock().expect("session table poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Builds a manifest from the last finished run of a session and saves
    /// it in the pipeline zoo.
    pub fn summarise_pipeline(
        &self,
        id: &str,
        name: &str,
        description: &str,
        bindings: &[Binding],
    ) -> Result<PipelineManifest, ManagerError> {
        if self.services.pipelines.contains(name) {
            return Err(ManagerError::Pipeline(crate::pipeline::PipelineError::Registry(
                crate::registry::RegistryError::DuplicatePipeline(name.to_owned()),
            )));
        }
        let events = finished_events(&self.services, id).map_err(ManagerError::InvalidState)?;
        let manifest = summarise_events(&events, id, name, description, bindings, |t| {
            is_pipeline_tool(&self.registry, t)
        })?;
        self.services.pipelines.save(&manifest).map_err(crate::pipeline::PipelineError::from)?;
        Ok(manifest)
    }

    /// Replays a saved pipeline as a run of this session. Arguments and tool
    /// availability are checked before any event is written.
    pub fn replay_pipeline(
        &self,
        id: &str,
        name: &str,
        arguments: &Value,
    ) -> Result<ReplayReport, ManagerError> {
        let entry = self
            .services
            .pipelines
            .get_pipeline_info(name)
            .map_err(crate::pipeline::PipelineError::from)?;
        let manifest = entry.manifest;
        manifest.validate()?;
        let bound: BTreeMap<String, Value> = bind_arguments(&manifest, arguments)?;
        for (i, step) in manifest.steps.iter().enumerate() {
            let (tool, _) = resolve_step(step, &bound)?;
            if self.registry.get(&tool).is_none() {
                return Err(crate::pipeline::PipelineError::UnknownTool { step: i + 1, tool }.into());
            }
        }
        let env = self.env();
        self.with_session(id, |s| {
            if !s.status.accepts_new_run() {
                return Err(ManagerError::InvalidState(format!("session is {:?}", s.status)));
            }
            let text = format!("Replay pipeline `{name}`.");
            s.emit(
                EventKind::UserMessage,
                json!({"text": text, "attachments": [], "replay": {"name": name, "arguments": arguments}}),
            )?;
            s.status = SessionStatus::Running;
            let steps: Vec<String> = manifest
                .steps
                .iter()
                .enumerate()
                .map(|(i, st)| format!("{}. {}", i + 1, st.label()))
                .collect();
            s.emit(EventKind::Plan, json!({"text": format!("Run the saved steps in order:\n{}", steps.join("\n"))}))?;
            let report = {
                let mut runner = ReplayRunner { session: s, env: &env };
                replay_manifest(&manifest, arguments, |t| env.registry.get(t).is_some(), &mut runner)?
            };
            let outcome = serde_json::to_string(&report).unwrap_or_default();
            if s.conversation.is_empty() {
                s.conversation.push(ChatMessage::system(&env.services.prompts.manager));
            }
            s.conversation.push(ChatMessage::user(format!(
                "The saved pipeline `{name}` was replayed outside the conversation. Report: {outcome}"
            )));
            if report.ok {
                s.finish_completed(format!(
                    "Pipeline `{name}` finished: {} step(s) succeeded.",
                    report.steps.len()
                ))?;
            } else {
                let step = report.failed_step.unwrap_or(0);
                let err = report
                    .steps
                    .iter()
                    .find(|r| r.index == step)
                    .and_then(|r| r.error.clone())
                    .unwrap_or_default();
                s.fail(format!("pipeline `{name}` failed at step {step}: {err}"))?;
            }
            Ok(report)
        })
    }
}

impl Session {
    fn store_knows_call(&self, call_id: &str) -> bool {
        self.emitter
            .store
            .read_events(&self.id, 0)
            .map(|events| {
                events
                    .iter()
                    .any(|e| e.kind == EventKind::ToolCallProposed && e.call_id() == Some(call_id))
            })
            .unwrap_or(false)
    }
}
