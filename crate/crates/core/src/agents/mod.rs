//! Language-model sub-agents exposed to the manager as tools: the script
//! writer and the analysts built on it, plot reading, and document retrieval.

mod analysts;
pub mod rag;
pub mod sandbox;
mod script;

use thiserror::Error;

pub use analysts::{
    analyse_plot, analyse_table, extract_values, visualise, PlotOutcome, ScriptEnv, TableAnswer,
};
pub use rag::{rag_query, Document, Hit, RagAnswer, RagIndex, RagStore};
pub use sandbox::{execute, prescan, Execution, InterpreterProfile, Interpreters, ScriptSlots};
pub use script::{
    changed_files, extract_code, has_terminate, run_script_task, stamp, Attempt, OutcomeStatus,
    ScriptOutcome, ScriptTask, Stamp,
};

/// Standalone word that ends a conversation.
pub const TERMINATE: &str = "TERMINATE";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("sandbox violation: {0}")]
    SandboxViolation(String),
    #[error("script failed after {attempts} attempt(s): {detail}")]
    AttemptsExhausted { attempts: usize, detail: String },
    #[error("declared output `{0}` was not written")]
    MissingOutput(String),
    #[error("invalid output: {0}")]
    InvalidOutput(String),
    #[error("unreadable image: {0}")]
    UnreadableImage(String),
    #[error("unknown index `{0}`")]
    UnknownIndex(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),
}
