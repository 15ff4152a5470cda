//! Provider-agnostic chat-completion and embedding gateway.
//!
//! Two chat providers ship: [`OpenAiCompatible`] speaks the widely deployed
//! `/chat/completions` JSON format with function calling, and
//! [`ReplayProvider`] serves pre-recorded turns for offline, deterministic runs.
//! Tool-call arguments are parsed leniently and validated strictly: a bad
//! argument record is flagged on the call instead of failing the request, so
//! the manager can hand the problem back to the model.

mod embed;
mod message;
mod openai;
mod replay;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use embed::fnv1a as fnv1a_hash;
pub use embed::{embed, Embedder, StubEmbedder};
pub use message::{AssistantTurn, ChatMessage, FinishReason, Role, ToolCallRequest};
pub use openai::OpenAiCompatible;
pub use replay::ReplayProvider;

use crate::registry::ToolSpec;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid conversation: {0}")]
    InvalidConversation(String),
    #[error("credential environment variable `{0}` is not set")]
    MissingCredential(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unparseable provider response: {0}")]
    Unparseable(String),
    #[error("replay queue exhausted after {served} turns")]
    ReplayExhausted { served: usize },
    #[error("replay fixture error: {0}")]
    Fixture(String),
    #[error("text {index} is empty")]
    EmptyText { index: usize },
    #[error("provider `{0}` cannot read image attachments")]
    NoVision(String),
}

/// Endpoint settings. The credential itself is never stored here, only the
/// name of the environment variable that holds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub embedding_model: Option<String>,
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_max_tokens() -> u32 {
    4096
}

impl ProviderConfig {
    pub fn new(base_url: &str, model: &str) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_owned(),
            model: model.to_owned(),
            api_key_env: None,
            timeout_secs: default_timeout_secs(),
            max_tokens: default_max_tokens(),
            temperature: 0.0,
            embedding_model: None,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

/// Who answered, for audit trails and eval reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderIdentity {
    pub kind: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

pub trait ChatProvider: Send + Sync {
    /// One completion. Implementations need not validate tool arguments;
    /// [`chat`] does that.
    fn complete(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
    ) -> Result<AssistantTurn, LlmError>;

    fn identity(&self) -> ProviderIdentity;

    fn supports_vision(&self) -> bool {
        false
    }
}

/// Checks the conversation shape the providers rely on.
pub fn validate_conversation(messages: &[ChatMessage]) -> Result<(), LlmError> {
    let first = messages
        .first()
        .ok_or_else(|| LlmError::InvalidConversation("no messages".into()))?;
    if first.role != Role::System {
        return Err(LlmError::InvalidConversation(
            "first message must be the system prompt".into(),
        ));
    }
    let mut issued = std::collections::HashSet::new();
    for (i, m) in messages.iter().enumerate() {
        if !m.attachments.is_empty() && !matches!(m.role, Role::User | Role::Tool) {
            return Err(LlmError::InvalidConversation(format!(
                "message {i}: attachments are only allowed on user and tool messages"
            )));
        }
        for call in &m.tool_calls {
            issued.insert(call.id.as_str());
        }
        match (&m.role, &m.tool_call_id) {
            (Role::Tool, Some(id)) if issued.contains(id.as_str()) => {}
            (Role::Tool, Some(id)) => {
                return Err(LlmError::InvalidConversation(format!(
                    "message {i}: tool result for unknown call `{id}`"
                )))
            }
            (Role::Tool, None) => {
                return Err(LlmError::InvalidConversation(format!(
                    "message {i}: tool message without a call id"
                )))
            }
            (_, Some(_)) => {
                return Err(LlmError::InvalidConversation(format!(
                    "message {i}: only tool messages carry a call id"
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Flags calls naming unknown tools or carrying invalid arguments.
pub fn validate_tool_calls(turn: &mut AssistantTurn, tools: &[ToolSpec]) {
    for call in &mut turn.tool_calls {
        if call.invalid.is_some() {
            continue;
        }
        match tools.iter().find(|t| t.name == call.name) {
            None => call.invalid = Some(format!("unknown tool `{}`", call.name)),
            Some(spec) => {
                if let Err(problem) = spec.check_arguments(&call.arguments) {
                    call.invalid = Some(problem);
                }
            }
        }
    }
}

/// Sends a conversation and returns the validated turn.
pub fn chat(
    provider: &dyn ChatProvider,
    messages: &[ChatMessage],
    tools: &[ToolSpec],
) -> Result<AssistantTurn, LlmError> {
    validate_conversation(messages)?;
    let mut turn = provider.complete(messages, tools)?;
    if turn.finish != FinishReason::Error && turn.text.is_none() && turn.tool_calls.is_empty() {
        return Err(LlmError::Unparseable(
            "turn has neither text nor tool calls".into(),
        ));
    }
    validate_tool_calls(&mut turn, tools);
    Ok(turn)
}
