//! Tool specifications, the vision model zoo and the pipeline zoo.

mod model_zoo;
mod pipeline_zoo;
mod tools;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use model_zoo::{compose_model_id, parse_model_id, ModelZoo, ModelZooEntry, ParsedModelId};
pub use pipeline_zoo::{PipelineEntry, PipelineZoo};
pub use tools::{
    is_identifier, ExecutedScript, ParamKind, ParamSpec, RegisteredTool, ToolCategory, ToolHandler,
    ToolOutput, ToolRegistry, ToolSpec,
};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("malformed name `{0}`: expected [a-z][a-z0-9_]*")]
    MalformedName(String),
    #[error("tool `{0}` has an empty description")]
    EmptyDescription(String),
    #[error("tool `{tool}`: {reason}")]
    InvalidParam { tool: String, reason: String },
    #[error("a different tool named `{0}` is already registered")]
    DuplicateTool(String),
    #[error("invalid {field} token `{token}`: {reason}")]
    InvalidToken {
        field: &'static str,
        token: String,
        reason: &'static str,
    },
    #[error("stored identifier `{stored}` does not match its fields (`{derived}`)")]
    IdentifierMismatch { stored: String, derived: String },
    #[error("model `{0}` is already in the zoo")]
    DuplicateModel(String),
    #[error("unknown pipeline `{0}`")]
    UnknownPipeline(String),
    #[error("pipeline `{0}` already exists")]
    DuplicatePipeline(String),
    #[error("schema error in {path}: {reason}")]
    Schema { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RegistryError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RegistryError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
