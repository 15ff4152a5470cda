//! HTTP and WebSocket front end over [`Manager`].
//!
//! Every handler forwards to a manager or registry call; the service holds
//! no session state of its own beyond the per-session event fan-out.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::{Body, Bytes};
use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use phenoflow::config::Config;
use phenoflow::llm::{AssistantTurn, ChatProvider, ReplayProvider};
use phenoflow::manager::{
    ApprovalMode, ApprovalPolicy, Decision, EventObserver, Manager, ManagerError, SessionConfig,
    SessionEvent, SessionStatus,
};
use phenoflow::pipeline::PipelineError;
use phenoflow::registry::RegistryError;
use phenoflow::toolkit::{default_registry, provider_from_config, Services};
use phenoflow::workspace::Workspace;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast;

const CHANNEL_CAPACITY: usize = 512;

/// One WebSocket text frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireEvent {
    pub session_id: String,
    #[serde(flatten)]
    pub event: SessionEvent,
}

/// Per-session broadcast of freshly persisted events.
#[derive(Default)]
pub struct EventHub {
    channels: Mutex<HashMap<String, broadcast::Sender<SessionEvent>>>,
}

impl EventHub {
    pub fn subscribe(&self, session_id: &str) -> broadcast::Receiver<SessionEvent> {
        let mut channels = self.channels.lock().expect("hub poisoned");
        channels
            .entry(session_id.to_owned())
            .or_insert_with(|| broadcast::channel(CHANNEL_CAPACITY).0)
            .subscribe()
    }
}

impl EventObserver for EventHub {
    fn on_event(&self, session_id: &str, event: &SessionEvent) {
        let mut channels = self.channels.lock().expect("hub poisoned");
        if let Some(tx) = channels.get(session_id) {
            if tx.send(event.clone()).is_err() {
                channels.remove(session_id);
            }
        }
    }
}

/// Shared handler state.
#[derive(Clone)]
pub struct AppState {
    pub manager: Arc<Manager>,
    pub config: Arc<Config>,
    hub: Arc<EventHub>,
}

impl AppState {
    /// Opens the services a config names and wires the event hub in.
    pub fn from_config(config: Config) -> anyhow::Result<Self> {
        let services = Services::from_config(&config)?;
        let manager = Manager::new(Arc::new(services), Arc::new(default_registry()));
        Ok(Self::new(Arc::new(manager), config))
    }

    pub fn new(manager: Arc<Manager>, config: Config) -> Self {
        let hub = Arc::new(EventHub::default());
        manager.add_observer(hub.clone());
        Self {
            manager,
            config: Arc::new(config),
            hub,
        }
    }

    fn workspace(&self, id: &str) -> Result<Workspace, ApiError> {
        match self.manager.workspace(id) {
            Ok(ws) => Ok(ws),
            // Sessions of an earlier process keep their files in the store.
            Err(ManagerError::UnknownSession(_)) if self.manager.store().exists(id) => {
                let dir = self.manager.store().artifacts_dir(id)?;
                Workspace::create(dir).map_err(|e| ApiError::internal(e.to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn require_known(&self, id: &str) -> Result<(), ApiError> {
        if self.manager.store().exists(id) {
            Ok(())
        } else {
            Err(ManagerError::UnknownSession(id.to_owned()).into())
        }
    }
}

/// JSON error body with an HTTP status.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.message}))).into_response()
    }
}

impl From<ManagerError> for ApiError {
    fn from(e: ManagerError) -> Self {
        let status = match &e {
            ManagerError::UnknownSession(_) | ManagerError::UnknownCall(_) => StatusCode::NOT_FOUND,
            ManagerError::NotAwaiting(_) | ManagerError::Busy(_) | ManagerError::InvalidState(_) => {
                StatusCode::CONFLICT
            }
            ManagerError::EmptyMessage | ManagerError::Workspace(_) => StatusCode::BAD_REQUEST,
            ManagerError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ManagerError::Pipeline(PipelineError::Registry(RegistryError::UnknownPipeline(_))) => {
                StatusCode::NOT_FOUND
            }
            ManagerError::Pipeline(PipelineError::Registry(RegistryError::Io { .. })) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            ManagerError::Pipeline(_) => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::UnknownPipeline(_) => Self::not_found(e.to_string()),
            other => Self::internal(other.to_string()),
        }
    }
}

fn joined<T>(r: Result<T, tokio::task::JoinError>) -> Result<T, ApiError> {
    r.map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

/// Builds the router. With a token, every route needs
/// `Authorization: Bearer <token>` or a `token` query parameter (browsers
/// cannot set headers on WebSocket upgrades).
pub fn router(state: AppState) -> Router {
    let token = state.config.server.token.clone();
    let api = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(session_info))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/approvals/{call_id}", post(post_approval))
        .route("/sessions/{id}/events", get(session_events))
        .route("/sessions/{id}/artifacts", get(list_artifacts))
        .route("/sessions/{id}/artifacts/{*name}", get(get_artifact).put(put_artifact))
        .route("/zoo/models", get(zoo_models))
        .route("/zoo/pipelines", get(zoo_pipelines))
        .route("/pipelines/{name}/replay", post(replay_pipeline))
        .with_state(state);
    match token {
        Some(t) => api.layer(middleware::from_fn_with_state(Arc::new(t), require_token)),
        None => api,
    }
}

async fn require_token(State(token): State<Arc<String>>, req: Request, next: Next) -> Response {
    let bearer = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    let query = req.uri().query().and_then(|q| {
        q.split('&')
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| *k == "token")
            .map(|(_, v)| v)
    });
    if bearer == Some(token.as_str()) || query == Some(token.as_str()) {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "missing or wrong bearer token").into_response()
    }
}

/// Binds and serves until the process is interrupted.
pub async fn serve(addr: SocketAddr, state: AppState) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    approval: Option<ApprovalMode>,
    max_turns: Option<usize>,
    /// Inline replay turns instead of the configured provider.
    replay: Option<Vec<AssistantTurn>>,
}

async fn create_session(
    State(state): State<AppState>,
    body: Option<Json<CreateSession>>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let provider: Arc<dyn ChatProvider> = match body.replay {
        Some(turns) => Arc::new(ReplayProvider::from_turns(turns)),
        None => provider_from_config(&state.config).map_err(|e| ApiError::bad_request(e.to_string()))?,
    };
    let mut policy = state.config.approval.clone();
    if let Some(mode) = body.approval {
        policy = ApprovalPolicy { mode, ..policy };
    }
    let config = SessionConfig::new(provider)
        .with_approval(policy)
        .with_max_turns(body.max_turns.unwrap_or(state.config.max_turns));
    let manager = state.manager.clone();
    let id = joined(tokio::task::spawn_blocking(move || manager.start_session(config)).await)??;
    Ok((StatusCode::CREATED, Json(json!({"session_id": id}))))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Value> {
    Json(json!({"sessions": state.manager.store().list()}))
}

async fn session_info(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    state.require_known(&id)?;
    let manager = state.manager.clone();
    let (status, pending) = joined(
        tokio::task::spawn_blocking(move || {
            let status = manager.status(&id).ok();
            let pending = manager.pending_approval(&id).ok().flatten();
            (status, pending)
        })
        .await,
    )?;
    Ok(Json(json!({
        "status": status,
        "pending_approval": pending,
        "live": status.is_some(),
    })))
}

#[derive(Debug, Default, Deserialize)]
struct WaitQuery {
    /// Block until the run stops instead of answering 202 at once.
    #[serde(default)]
    wait: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    text: String,
    #[serde(default)]
    attachments: Vec<String>,
}

/// Answers 200 with the final status when waiting, else 202 and lets the
/// run continue in the background (progress arrives on the event stream).
async fn drive(
    id: String,
    wait: bool,
    work: impl FnOnce() -> Result<SessionStatus, ManagerError> + Send + 'static,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let task = tokio::task::spawn_blocking(work);
    if wait {
        let status = joined(task.await)??;
        return Ok((StatusCode::OK, Json(json!({"session_id": id, "status": status}))));
    }
    let sid = id.clone();
    tokio::spawn(async move {
        match task.await {
            Ok(Ok(status)) => tracing::debug!(session = %sid, ?status, "run stopped"),
            Ok(Err(e)) => tracing::warn!(session = %sid, error = %e, "background run refused"),
            Err(e) => tracing::error!(session = %sid, error = %e, "background run panicked"),
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({"session_id": id, "status": SessionStatus::Running}))))
}

async fn post_message(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<WaitQuery>,
    Json(body): Json<MessageBody>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let status = state.manager.status(&id)?;
    if body.text.trim().is_empty() {
        return Err(ManagerError::EmptyMessage.into());
    }
    if matches!(status, SessionStatus::Running | SessionStatus::AwaitingApproval) {
        return Err(ManagerError::InvalidState(format!("session is {status:?}")).into());
    }
    let ws = state.workspace(&id)?;
    for a in &body.attachments {
        let ok = ws.resolve(a).map(|p| p.is_file()).unwrap_or(false);
        if !ok {
            return Err(ApiError::bad_request(format!("attachment `{a}` does not exist")));
        }
    }
    let manager = state.manager.clone();
    let sid = id.clone();
    drive(id, q.wait, move || manager.submit_user_message(&sid, &body.text, &body.attachments)).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApprovalBody {
    decision: Decision,
    note: Option<String>,
}

async fn post_approval(
    State(state): State<AppState>,
    Path((id, call_id)): Path<(String, String)>,
    Query(q): Query<WaitQuery>,
    Json(body): Json<ApprovalBody>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    state.manager.status(&id)?;
    // Waiting for the session lock means a run that just requested this
    // approval has finished writing before it is answered.
    let manager = state.manager.clone();
    let sid = id.clone();
    let pending = joined(tokio::task::spawn_blocking(move || manager.pending_approval(&sid)).await)??;
    if pending.as_deref() != Some(call_id.as_str()) {
        // Let the manager classify unknown versus not-awaiting calls.
        let err = state
            .manager
            .resolve_approval(&id, &call_id, body.decision, body.note.as_deref())
            .err()
            .unwrap_or_else(|| ManagerError::NotAwaiting(call_id.clone()));
        return Err(err.into());
    }
    let manager = state.manager.clone();
    let sid = id.clone();
    drive(id, q.wait, move || {
        manager.resolve_approval(&sid, &call_id, body.decision, body.note.as_deref())
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    from_seq: u64,
}

fn read_events(state: &AppState, id: &str, from_seq: u64) -> Result<Vec<SessionEvent>, ApiError> {
    Ok(state.manager.events(id, from_seq)?)
}

/// WebSocket stream of events from `from_seq` on; without an upgrade
/// request, the persisted events as a JSON array.
async fn session_events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    ws: Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> Result<Response, ApiError> {
    state.require_known(&id)?;
    match ws {
        Ok(upgrade) => Ok(upgrade.on_upgrade(move |socket| stream_events(socket, state, id, q.from_seq))),
        Err(_) => {
            let events = read_events(&state, &id, q.from_seq)?;
            let wire: Vec<WireEvent> = events
                .into_iter()
                .map(|event| WireEvent {
                    session_id: id.clone(),
                    event,
                })
                .collect();
            Ok(Json(wire).into_response())
        }
    }
}

async fn send_event(socket: &mut WebSocket, id: &str, event: SessionEvent) -> Result<(), ()> {
    let frame = serde_json::to_string(&WireEvent {
        session_id: id.to_owned(),
        event,
    })
    .map_err(|_| ())?;
    socket.send(Message::Text(frame.into())).await.map_err(|_| ())
}

/// Sends persisted events from `*next` on and advances `*next`.
async fn catch_up(socket: &mut WebSocket, state: &AppState, id: &str, next: &mut u64) -> Result<(), ()> {
    let events = {
        let (state, id, from) = (state.clone(), id.to_owned(), *next);
        tokio::task::spawn_blocking(move || read_events(&state, &id, from))
            .await
            .map_err(|_| ())?
            .map_err(|_| ())?
    };
    for e in events {
        if e.seq < *next {
            continue;
        }
        *next = e.seq + 1;
        send_event(socket, id, e).await?;
    }
    Ok(())
}

// Subscribing before reading the backlog means no event falls between the
// two; duplicates are dropped by seq.
async fn stream_events(mut socket: WebSocket, state: AppState, id: String, from_seq: u64) {
    let mut rx = state.hub.subscribe(&id);
    let mut next = from_seq;
    if catch_up(&mut socket, &state, &id, &mut next).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            received = rx.recv() => {
                let sent = match received {
                    Ok(e) if e.seq < next => Ok(()),
                    Ok(e) if e.seq == next => {
                        next += 1;
                        send_event(&mut socket, &id, e).await
                    }
                    Ok(_) | Err(broadcast::error::RecvError::Lagged(_)) => {
                        catch_up(&mut socket, &state, &id, &mut next).await
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                };
                if sent.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}

async fn list_artifacts(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    state.require_known(&id)?;
    let ws = state.workspace(&id)?;
    let files: Vec<Value> = ws
        .snapshot()
        .into_iter()
        .map(|(path, _, size)| json!({"name": ws.relative(&path), "size": size}))
        .collect();
    Ok(Json(json!({"artifacts": files})))
}

fn content_type(name: &str) -> &'static str {
    let ext = name.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase()).unwrap_or_default();
    match ext.as_str() {
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        "csv" => "text/csv; charset=utf-8",
        "json" => "application/json",
        "txt" | "log" | "py" | "md" | "sh" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

fn artifact_path(ws: &Workspace, name: &str) -> Result<PathBuf, ApiError> {
    ws.resolve(name).map_err(|e| ApiError::bad_request(e.to_string()))
}

async fn get_artifact(
    State(state): State<AppState>,
    Path((id, name)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    state.require_known(&id)?;
    let ws = state.workspace(&id)?;
    let missing = || ApiError::not_found(format!("no artifact `{name}` in session `{id}`"));
    let path = artifact_path(&ws, &name)?;
    // Symlinks must not lead out of the workspace.
    let real = path.canonicalize().map_err(|_| missing())?;
    if !real.starts_with(ws.root()) || !real.is_file() {
        return Err(missing());
    }
    let bytes = tokio::fs::read(&real).await.map_err(|_| missing())?;
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, content_type(&name).parse().expect("static header"));
    Ok((headers, Body::from(bytes)).into_response())
}

async fn put_artifact(
    State(state): State<AppState>,
    Path((id, name)): Path<(String, String)>,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    state.require_known(&id)?;
    let ws = state.workspace(&id)?;
    let path = artifact_path(&ws, &name)?;
    if let Some(parent) = path.parent() {
        tokio::fs::create_dir_all(parent).await.map_err(|e| ApiError::internal(e.to_string()))?;
    }
    tokio::fs::write(&path, &body).await.map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(json!({"name": ws.relative(&path), "size": body.len()}))))
}

async fn zoo_models(State(state): State<AppState>) -> Result<Json<Value>, ApiError> {
    let models = state.manager.services().model_zoo.get_model_zoo()?;
    Ok(Json(json!({"models": models})))
}

async fn zoo_pipelines(State(state): State<AppState>) -> Result<Json<Value>, ApiError> {
    let zoo = &state.manager.services().pipelines;
    let mut out = Vec::new();
    for name in zoo.get_pipeline_zoo()? {
        out.push(serde_json::to_value(zoo.get_pipeline_info(&name)?).map_err(|e| ApiError::internal(e.to_string()))?);
    }
    Ok(Json(json!({"pipelines": out})))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReplayBody {
    #[serde(default)]
    arguments: Option<Value>,
    /// Runs in this session; a fresh one is created when absent.
    session_id: Option<String>,
}

async fn replay_pipeline(
    State(state): State<AppState>,
    Path(name): Path<String>,
    body: Option<Json<ReplayBody>>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let arguments = body.arguments.unwrap_or_else(|| json!({}));
    if !state.manager.services().pipelines.contains(&name) {
        return Err(RegistryError::UnknownPipeline(name).into());
    }
    let manager = state.manager.clone();
    let policy = state.config.approval.clone();
    let (id, report) = joined(
        tokio::task::spawn_blocking(move || -> Result<_, ManagerError> {
            let id = match body.session_id {
                Some(id) => id,
                None => manager.start_session(
                    SessionConfig::new(Arc::new(ReplayProvider::from_turns(Vec::new()))).with_approval(policy),
                )?,
            };
            let report = manager.replay_pipeline(&id, &name, &arguments)?;
            Ok((id, report))
        })
        .await,
    )??;
    let status = if report.ok {
        StatusCode::OK
    } else {
        StatusCode::UNPROCESSABLE_ENTITY
    };
    Ok((status, Json(json!({"session_id": id, "report": report}))))
}
