//! The vision model zoo and the identifier naming convention.
//!
//! Identifiers are `{species}_{task}_{dataset?}_{model}_{finetune?}`. The
//! structured fields stored in `model_zoo.json` are authoritative; the string is
//! always derived from them. A four-segment string cannot say whether its third
//! segment is a dataset or the last one a fine-tuning method, so
//! [`parse_model_id`] is for display only.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::RegistryError;
use crate::vision::AdapterEndpoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelZooEntry {
    pub species: String,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finetune: Option<String>,
    pub adapter: AdapterEndpoint,
    pub identifier: String,
    /// Free-form provenance; stored, never interpreted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl ModelZooEntry {
    /// Builds an entry, deriving its identifier.
    pub fn new(
        species: &str,
        task: &str,
        dataset: Option<&str>,
        model: &str,
        finetune: Option<&str>,
        adapter: AdapterEndpoint,
    ) -> Result<Self, RegistryError> {
        let identifier = compose_model_id(species, task, dataset, model, finetune)?;
        Ok(Self {
            species: species.to_owned(),
            task: task.to_owned(),
            dataset: dataset.map(str::to_owned),
            model: model.to_owned(),
            finetune: finetune.map(str::to_owned),
            adapter,
            identifier,
            notes: None,
        })
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        let derived = compose_model_id(
            &self.species,
            &self.task,
            self.dataset.as_deref(),
            &self.model,
            self.finetune.as_deref(),
        )?;
        if derived != self.identifier {
            return Err(RegistryError::IdentifierMismatch {
                stored: self.identifier.clone(),
                derived,
            });
        }
        Ok(())
    }
}

fn check_token(field: &'static str, token: &str) -> Result<(), RegistryError> {
    if token.is_empty() {
        return Err(RegistryError::InvalidToken {
            field,
            token: token.to_owned(),
            reason: "empty",
        });
    }
    if token.contains('_') {
        return Err(RegistryError::InvalidToken {
            field,
            token: token.to_owned(),
            reason: "contains the `_` delimiter",
        });
    }
    Ok(())
}

/// Joins the fields with underscores, omitting absent optional fields.
pub fn compose_model_id(
    species: &str,
    task: &str,
    dataset: Option<&str>,
    model: &str,
    finetune: Option<&str>,
) -> Result<String, RegistryError> {
    check_token("species", species)?;
    check_token("task", task)?;
    check_token("model", model)?;
    let mut parts = vec![species, task];
    if let Some(d) = dataset {
        check_token("dataset", d)?;
        parts.push(d);
    }
    parts.push(model);
    if let Some(f) = finetune {
        check_token("finetune", f)?;
        parts.push(f);
    }
    Ok(parts.join("_"))
}

/// Best-effort split of an identifier for display.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedModelId<'a> {
    /// Three or five segments: unambiguous.
    Fields {
        species: &'a str,
        task: &'a str,
        dataset: Option<&'a str>,
        model: &'a str,
        finetune: Option<&'a str>,
    },
    /// Four segments: dataset or fine-tune, cannot tell.
    Ambiguous(Vec<&'a str>),
    Invalid,
}

pub fn parse_model_id(id: &str) -> ParsedModelId<'_> {
    let parts: Vec<&str> = id.split('_').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return ParsedModelId::Invalid;
    }
    match parts.as_slice() {
        [s, t, m] => ParsedModelId::Fields {
            species: s,
            task: t,
            dataset: None,
            model: m,
            finetune: None,
        },
        [s, t, d, m, f] => ParsedModelId::Fields {
            species: s,
            task: t,
            dataset: Some(d),
            model: m,
            finetune: Some(f),
        },
        [_, _, _, _] => ParsedModelId::Ambiguous(parts),
        _ => ParsedModelId::Invalid,
    }
}

/// `model_zoo.json`, re-read on every query so external edits are visible.
#[derive(Debug)]
pub struct ModelZoo {
    path: PathBuf,
    writer: Mutex<()>,
}

impl ModelZoo {
    /// Opens a zoo file, creating an empty one if it does not exist.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let path = path.into();
        if !path.exists() {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| RegistryError::io(&path, e))?;
            }
            std::fs::write(&path, "[]\n").map_err(|e| RegistryError::io(&path, e))?;
        }
        Ok(Self {
            path,
            writer: Mutex::new(()),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Every entry, in file order.
    pub fn get_model_zoo(&self) -> Result<Vec<ModelZooEntry>, RegistryError> {
        load_zoo_file(&self.path)
    }

    pub fn find(&self, identifier: &str) -> Result<Option<ModelZooEntry>, RegistryError> {
        Ok(self
            .get_model_zoo()?
            .into_iter()
            .find(|e| e.identifier == identifier))
    }

    /// Appends an entry; identifiers must be unique.
    pub fn register(&self, entry: ModelZooEntry) -> Result<(), RegistryError> {
        entry.validate()?;
        let _guard = self.writer.lock().expect("zoo writer poisoned");
        let mut entries = load_zoo_file(&self.path)?;
        if entries.iter().any(|e| e.identifier == entry.identifier) {
            return Err(RegistryError::DuplicateModel(entry.identifier));
        }
        entries.push(entry);
        let mut text = serde_json::to_string_pretty(&entries).expect("zoo entries serialize");
        text.push('\n');
        write_atomic(&self.path, text.as_bytes()).map_err(|e| RegistryError::io(&self.path, e))
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", uuid::Uuid::new_v4().simple()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn load_zoo_file(path: &Path) -> Result<Vec<ModelZooEntry>, RegistryError> {
    let text = std::fs::read_to_string(path).map_err(|e| RegistryError::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let raw: Vec<Value> = serde_json::from_str(&text).map_err(|e| RegistryError::Schema {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut entries = Vec::with_capacity(raw.len());
    let mut seen = std::collections::HashSet::new();
    for (index, value) in raw.into_iter().enumerate() {
        let label = value
            .get("identifier")
            .and_then(Value::as_str)
            .map(|s| format!("entry {index} (`{s}`)"))
            .unwrap_or_else(|| format!("entry {index}"));
        let entry: ModelZooEntry =
            serde_json::from_value(value).map_err(|e| RegistryError::Schema {
                path: path.to_path_buf(),
                reason: format!("{label}: {e}"),
            })?;
        entry.validate().map_err(|e| RegistryError::Schema {
            path: path.to_path_buf(),
            reason: format!("{label}: {e}"),
        })?;
        if !seen.insert(entry.identifier.clone()) {
            return Err(RegistryError::Schema {
                path: path.to_path_buf(),
                reason: format!("{label}: duplicate identifier"),
            });
        }
        entries.push(entry);
    }
    Ok(entries)
}
