//! Client side of the vision-adapter protocol.
//!
//! The core never loads model weights. Inference and training requests go to
//! an adapter over newline-delimited JSON, by subprocess stdio, HTTP, or an
//! in-process server (the deterministic stub). Images travel by filesystem
//! path only. Adapter output is validated before it becomes an artifact.

mod dataset;
mod inference;
mod jobs;
mod protocol;
pub mod stub;
mod transport;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dataset::{get_dataset_format, prepare_dataset, ClassCounts, DatasetFormat, SplitReport};
pub use inference::{
    collect_images, infer_classification, infer_instance_segmentation, infer_regression,
    resolve_checkpoint, InferenceOutput,
};
pub use jobs::{FinetuneMethod, JobStatus, JobTracker, TrainRequest, TrainingJob};
pub use protocol::{handle_line, Op, ProtocolError, Request, Response};
pub use transport::{
    AdapterClient, AdapterPool, AdapterServer, HttpTransport, SubprocessTransport,
    Transport as AdapterTransport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Segment,
    Classify,
    Regress,
    Train,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Capability::Segment => "segment",
            Capability::Classify => "classify",
            Capability::Regress => "regress",
            Capability::Train => "train",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    Subprocess,
    Http,
    InProcess,
}

/// Where an adapter lives and what it claims to do.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterEndpoint {
    pub transport: TransportKind,
    /// Command line, base URL, or in-process server name.
    pub address: String,
    #[serde(default)]
    pub capabilities: BTreeSet<Capability>,
    /// Adapter-side checkpoint name when it differs from the zoo
    /// identifier, e.g. with a hub namespace prefix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

impl AdapterEndpoint {
    pub fn in_process(name: &str) -> Self {
        Self {
            transport: TransportKind::InProcess,
            address: name.to_owned(),
            capabilities: [
                Capability::Segment,
                Capability::Classify,
                Capability::Regress,
                Capability::Train,
            ]
            .into(),
            checkpoint: None,
        }
    }

    pub fn subprocess(command: &str, capabilities: &[Capability]) -> Self {
        Self {
            transport: TransportKind::Subprocess,
            address: command.to_owned(),
            capabilities: capabilities.iter().copied().collect(),
            checkpoint: None,
        }
    }

    pub fn http(url: &str, capabilities: &[Capability]) -> Self {
        Self {
            transport: TransportKind::Http,
            address: url.to_owned(),
            capabilities: capabilities.iter().copied().collect(),
            checkpoint: None,
        }
    }

    pub fn with_capabilities(mut self, caps: &[Capability]) -> Self {
        self.capabilities = caps.iter().copied().collect();
        self
    }

    pub fn with_checkpoint(mut self, checkpoint: &str) -> Self {
        self.checkpoint = Some(checkpoint.to_owned());
        self
    }

    /// Connection identity: two entries sharing it share one client.
    pub fn key(&self) -> String {
        format!("{:?}:{}", self.transport, self.address)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    InstanceSegmentation,
    Classification,
    Regression,
}

impl TaskType {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::InstanceSegmentation => "instance_segmentation",
            TaskType::Classification => "classification",
            TaskType::Regression => "regression",
        }
    }

    pub fn capability(self) -> Capability {
        match self {
            TaskType::InstanceSegmentation => Capability::Segment,
            TaskType::Classification => Capability::Classify,
            TaskType::Regression => Capability::Regress,
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskType {
    type Err = VisionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', ' '], "_")
            .as_str()
        {
            "instance_segmentation" | "segmentation" => Ok(TaskType::InstanceSegmentation),
            "classification" | "image_classification" => Ok(TaskType::Classification),
            "regression" | "image_regression" => Ok(TaskType::Regression),
            _ => Err(VisionError::UnknownTask(s.to_owned())),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VisionError {
    #[error("unknown checkpoint `{0}`")]
    UnknownCheckpoint(String),
    #[error(
        "unknown task type `{0}` (expected instance_segmentation, classification or regression)"
    )]
    UnknownTask(String),
    #[error("adapter {endpoint} lacks the `{capability}` capability")]
    MissingCapability {
        endpoint: String,
        capability: Capability,
    },
    #[error("adapter {endpoint} handshake does not confirm declared capability `{capability}`")]
    HandshakeMismatch {
        endpoint: String,
        capability: Capability,
    },
    #[error("adapter transport failure: {0}")]
    Transport(String),
    #[error("adapter crashed: {0}")]
    Crash(String),
    #[error("adapter error [{code}]: {message}")]
    Adapter { code: String, message: String },
    #[error("adapter output is schema-invalid: {reason}; adapter diagnostics: {diagnostics}")]
    InvalidOutput { reason: String, diagnostics: String },
    #[error("input not found: {0}")]
    MissingInput(String),
    #[error("dataset layout violation at {path}: {reason}")]
    Layout { path: String, reason: String },
    #[error("class `{0}` has no images")]
    EmptyClass(String),
    #[error("dataset at {0} has not been prepared (no split.json)")]
    NotPrepared(String),
    #[error("unknown training job `{0}`")]
    UnknownJob(String),
    #[error("adapter {0} already runs a training job")]
    EndpointBusy(String),
    #[error("training job `{job}` failed: {log}")]
    JobFailed { job: String, log: String },
    #[error(transparent)]
    Registry(#[from] crate::registry::RegistryError),
    #[error(transparent)]
    Workspace(#[from] crate::workspace::WorkspaceError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl VisionError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        VisionError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
