//! Pipeline manifests: extraction from session transcripts, replay, and
//! rendering.

mod manifest;
mod render;
mod replay;
mod summarise;

use thiserror::Error;

pub use manifest::{
    escape_text, parse_template, PipelineManifest, PipelineParam, Provenance, ScriptBinding,
    Segment, Step, MANIFEST_VERSION,
};
pub use render::render_python;
pub use replay::{
    bind_arguments, replay_manifest, resolve_step, substitute, ReplayReport, StepReport,
    StepRunner, StepStatus, SCRIPT_TOOL,
};
pub use summarise::{executed_steps, summarise_events, Binding};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("session `{0}` has no successfully terminated run")]
    SessionNotFinished(String),
    #[error("session `{0}` contains no successful tool calls")]
    NoSteps(String),
    #[error("literal {literal} for parameter `{param}` does not occur in any step")]
    LiteralNotFound { param: String, literal: String },
    #[error("missing required parameter `{0}`")]
    MissingParam(String),
    #[error("bad pipeline argument: {0}")]
    BadArgument(String),
    #[error("step {step}: tool `{tool}` is not registered")]
    UnknownTool { step: usize, tool: String },
    #[error(transparent)]
    Registry(#[from] crate::registry::RegistryError),
}
