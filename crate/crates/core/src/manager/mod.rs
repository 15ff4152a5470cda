//! The orchestration loop: a session receives a user message, the model
//! plans and proposes tool calls, approved calls run, their results go back
//! to the model, and the run ends on the terminate token. Every step is an
//! ordered, persisted [`SessionEvent`].

mod events;
mod policy;
mod session;
mod store;

use thiserror::Error;

pub use events::{check_event_order, runs, EventKind, SessionEvent};
pub use policy::{ApprovalMode, ApprovalPolicy};
pub use session::{Decision, EventObserver, Manager, SessionConfig, SessionStatus, SPILL_BYTES};
pub use store::{SessionStore, ARTIFACTS_DIR, EVENTS_FILE};

#[derive(Debug, Error)]
pub enum ManagerError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown call `{0}`")]
    UnknownCall(String),
    #[error("session is not awaiting approval for call `{0}`")]
    NotAwaiting(String),
    #[error("session `{0}` is busy with another request")]
    Busy(String),
    #[error("message text is empty")]
    EmptyMessage,
    #[error("{0}")]
    InvalidState(String),
    #[error("working directory: {0}")]
    Workspace(String),
    #[error("session store: {0}")]
    Store(String),
    #[error(transparent)]
    Pipeline(#[from] crate::pipeline::PipelineError),
}
