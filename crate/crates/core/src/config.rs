//! Key-value configuration files.
//!
//! One `key = value` per line, `#` starts a comment line, and `${VAR}` in a
//! value is replaced by the environment variable `VAR`. Relative paths are
//! resolved against the directory holding the file.
//!
//! ```text
//! store_root = ./store
//! provider.kind = openai
//! provider.base_url = https://llm.example.org/v1
//! provider.model = some-model
//! provider.api_key_env = LLM_API_KEY
//! approval = gated
//! approval.analysis = false
//! ```

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::llm::ProviderConfig;
use crate::manager::{ApprovalMode, ApprovalPolicy};
use crate::registry::ToolCategory;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: environment variable `{var}` is not set")]
    MissingVar { line: usize, var: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    BadValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// A chat-completions compatible HTTP endpoint.
    Openai,
    /// Pre-recorded turns from `provider.replay_file`.
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Stub,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScriptSettings {
    pub max_attempts: usize,
    pub slots: usize,
    pub timeout_secs: u64,
    /// Default interpreter profile name.
    pub profile: String,
}

impl Default for ScriptSettings {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            slots: 4,
            timeout_secs: 120,
            profile: "python".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServerSettings {
    pub bind: String,
    /// Static bearer token; no authentication when absent. Never serialized.
    #[serde(skip)]
    pub token: Option<String>,
}

impl Default for ServerSettings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8750".into(),
            token: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub provider_kind: ProviderKind,
    pub provider: ProviderConfig,
    pub replay_file: Option<PathBuf>,
    pub embedder: EmbedderKind,
    pub store_root: PathBuf,
    model_zoo: Option<PathBuf>,
    pipeline_dir: Option<PathBuf>,
    rag_dir: Option<PathBuf>,
    pub prompts_dir: Option<PathBuf>,
    pub approval: ApprovalPolicy,
    pub max_turns: usize,
    pub script: ScriptSettings,
    /// Training adapter: `stub`, `subprocess:<command>` or an `http(s)://` URL.
    pub training_adapter: String,
    pub server: ServerSettings,
}

pub const DEFAULT_MAX_TURNS: usize = 24;

impl Default for Config {
    fn default() -> Self {
        Self {
            provider_kind: ProviderKind::Replay,
            provider: ProviderConfig::new("http://127.0.0.1:8000/v1", "replay"),
            replay_file: None,
            embedder: EmbedderKind::Stub,
            store_root: PathBuf::from("phenoflow-store"),
            model_zoo: None,
            pipeline_dir: None,
            rag_dir: None,
            prompts_dir: None,
            approval: ApprovalPolicy::auto(),
            max_turns: DEFAULT_MAX_TURNS,
            script: ScriptSettings::default(),
            training_adapter: "stub".into(),
            server: ServerSettings::default(),
        }
    }
}

fn interpolate(
    value: &str,
    line: usize,
    env: &dyn Fn(&str) -> Option<String>,
) -> Result<String, ConfigError> {
    let mut out = String::new();
    let mut rest = value;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find('}').ok_or_else(|| ConfigError::Syntax {
            line,
            message: "unterminated `${`".into(),
        })?;
        let var = &after[..end];
        if var.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: "empty variable name".into(),
            });
        }
        out.push_str(&env(var).ok_or_else(|| ConfigError::MissingVar {
            line,
            var: var.to_owned(),
        })?);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        line,
        key: key.to_owned(),
        message: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::BadValue {
            line,
            key: key.to_owned(),
            message: "expected true or false".into(),
        }),
    }
}

impl Config {
    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn parse(
        text: &str,
        base_dir: &Path,
        env: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let mut c = Config {
            store_root: base_dir.join("phenoflow-store"),
            ..Config::default()
        };
        let path = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let value = interpolate(value.trim(), line, env)?;
            let v = value.as_str();
            let bad = |message: &str| ConfigError::BadValue {
                line,
                key: key.to_owned(),
                message: message.to_owned(),
            };
            match key {
                "provider.kind" => {
                    c.provider_kind = match v {
                        "openai" => ProviderKind::Openai,
                        "replay" => ProviderKind::Replay,
                        _ => return Err(bad("expected openai or replay")),
                    }
                }
                "provider.base_url" => c.provider.base_url = v.trim_end_matches('/').to_owned(),
                "provider.model" => c.provider.model = v.to_owned(),
                "provider.api_key_env" => c.provider.api_key_env = Some(v.to_owned()),
                "provider.timeout_secs" => c.provider.timeout_secs = parse_num(key, v, line)?,
                "provider.max_tokens" => c.provider.max_tokens = parse_num(key, v, line)?,
                "provider.temperature" => c.provider.temperature = parse_num(key, v, line)?,
                "provider.embedding_model" => c.provider.embedding_model = Some(v.to_owned()),
                "provider.replay_file" => c.replay_file = Some(path(v)),
                "embedder" => {
                    c.embedder = match v {
                        "stub" => EmbedderKind::Stub,
                        "provider" => EmbedderKind::Provider,
                        _ => return Err(bad("expected stub or provider")),
                    }
                }
                "store_root" => c.store_root = path(v),
                "model_zoo" => c.model_zoo = Some(path(v)),
                "pipeline_dir" => c.pipeline_dir = Some(path(v)),
                "rag_dir" => c.rag_dir = Some(path(v)),
                "prompts_dir" => c.prompts_dir = Some(path(v)),
                "approval" => {
                    c.approval.mode = match v {
                        "auto" => ApprovalMode::Auto,
                        "gated" => ApprovalMode::Gated,
                        _ => return Err(bad("expected auto or gated")),
                    }
                }
                "max_turns" => {
                    c.max_turns = parse_num(key, v, line)?;
                    if c.max_turns == 0 {
                        return Err(bad("must be at least 1"));
                    }
                }
                "script.max_attempts" => c.script.max_attempts = parse_num(key, v, line)?,
                "script.slots" => c.script.slots = parse_num(key, v, line)?,
                "script.timeout_secs" => c.script.timeout_secs = parse_num(key, v, line)?,
                "script.profile" => c.script.profile = v.to_owned(),
                "training.adapter" => c.training_adapter = v.to_owned(),
                "server.bind" => c.server.bind = v.to_owned(),
                "server.token" => c.server.token = Some(v.to_owned()).filter(|t| !t.is_empty()),
                _ => {
                    if let Some(cat) = key.strip_prefix("approval.") {
                        let category: ToolCategory =
                            serde_json::from_value(serde_json::Value::String(cat.to_owned()))
                                .map_err(|_| ConfigError::UnknownKey {
                                    line,
                                    key: key.to_owned(),
                                })?;
                        c.approval.overrides.insert(category, parse_bool(key, v, line)?);
                    } else {
                        return Err(ConfigError::UnknownKey {
                            line,
                            key: key.to_owned(),
                        });
                    }
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file, interpolating from the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::parse(&text, base, &|k| std::env::var(k).ok())
    }

    /// Defaults with every store below `store_root`.
    pub fn with_store_root(store_root: impl Into<PathBuf>) -> Self {
        Self {
            store_root: store_root.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.script.max_attempts == 0 || self.script.slots == 0 || self.script.timeout_secs == 0 {
            return Err(ConfigError::Invalid(
                "script.max_attempts, script.slots and script.timeout_secs must be positive".into(),
            ));
        }
        if self.embedder == EmbedderKind::Provider && self.provider_kind != ProviderKind::Openai {
            return Err(ConfigError::Invalid(
                "embedder = provider needs provider.kind = openai".into(),
            ));
        }
        Ok(())
    }

    pub fn model_zoo_path(&self) -> PathBuf {
        self.model_zoo
            .clone()
            .unwrap_or_else(|| self.store_root.join("model_zoo.json"))
    }

    pub fn pipeline_dir(&self) -> PathBuf {
        self.pipeline_dir
            .clone()
            .unwrap_or_else(|| self.store_root.join("pipelines"))
    }

    pub fn rag_dir(&self) -> PathBuf {
        self.rag_dir.clone().unwrap_or_else(|| self.store_root.join("rag"))
    }

    pub fn set_model_zoo(&mut self, path: impl Into<PathBuf>) {
        self.model_zoo = Some(path.into());
    }

    pub fn set_pipeline_dir(&mut self, path: impl Into<PathBuf>) {
        self.pipeline_dir = Some(path.into());
    }
}
