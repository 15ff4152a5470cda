use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;

use super::RegistryError;
use crate::pipeline::PipelineManifest;
use crate::registry::tools::is_identifier;

/// A saved pipeline as listed by the zoo.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineEntry {
    pub name: String,
    pub manifest: PipelineManifest,
    pub created_at: String,
    pub source_session: Option<String>,
}

/// One `{name}.json` manifest per pipeline in a directory.
#[derive(Debug)]
pub struct PipelineZoo {
    dir: PathBuf,
    writer: Mutex<()>,
}

impl PipelineZoo {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| RegistryError::io(&dir, e))?;
        Ok(Self {
            dir,
            writer: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn file_for(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.json"))
    }

    /// Pipeline names, sorted.
    pub fn get_pipeline_zoo(&self) -> Result<Vec<String>, RegistryError> {
        let mut names = Vec::new();
        for entry in std::fs::read_dir(&self.dir).map_err(|e| RegistryError::io(&self.dir, e))? {
            let path = entry.map_err(|e| RegistryError::io(&self.dir, e))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    names.push(stem.to_owned());
                }
            }
        }
        names.sort();
        Ok(names)
    }

    pub fn get_pipeline_info(&self, name: &str) -> Result<PipelineEntry, RegistryError> {
        let path = self.file_for(name);
        if !is_identifier(name) || !path.is_file() {
            return Err(RegistryError::UnknownPipeline(name.to_owned()));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| RegistryError::io(&path, e))?;
        let manifest = PipelineManifest::parse(&text).map_err(|e| RegistryError::Schema {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let provenance = manifest.provenance.clone().unwrap_or_default();
        Ok(PipelineEntry {
            name: manifest.name.clone(),
            created_at: provenance.created_at,
            source_session: provenance.source_session,
            manifest,
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.file_for(name).is_file()
    }

    /// Stores a new manifest. Names are never overwritten.
    pub fn save(&self, manifest: &PipelineManifest) -> Result<PathBuf, RegistryError> {
        manifest.validate().map_err(|e| RegistryError::Schema {
            path: self.file_for(&manifest.name),
            reason: e.to_string(),
        })?;
        if !is_identifier(&manifest.name) {
            return Err(RegistryError::MalformedName(manifest.name.clone()));
        }
        let _guard = self.writer.lock().expect("pipeline writer poisoned");
        let path = self.file_for(&manifest.name);
        if path.exists() {
            return Err(RegistryError::DuplicatePipeline(manifest.name.clone()));
        }
        super::model_zoo::write_atomic(&path, manifest.to_json().as_bytes())
            .map_err(|e| RegistryError::io(&path, e))?;
        Ok(path)
    }

    pub fn remove(&self, name: &str) -> Result<(), RegistryError> {
        let path = self.file_for(name);
        if !path.is_file() {
            return Err(RegistryError::UnknownPipeline(name.to_owned()));
        }
        std::fs::remove_file(&path).map_err(|e| RegistryError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{PipelineManifest, Step};

    fn manifest(name: &str) -> PipelineManifest {
        PipelineManifest::new(
            name,
            "demo",
            vec![],
            vec![Step::tool_call("get_model_zoo", serde_json::json!({}))],
        )
    }

    #[test]
    fn lists_sorted_names_and_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let zoo = PipelineZoo::open(dir.path()).unwrap();
        assert!(zoo.get_pipeline_zoo().unwrap().is_empty());
        zoo.save(&manifest("ara_crop_pipeline")).unwrap();
        zoo.save(&manifest("a_first")).unwrap();
        assert_eq!(
            zoo.get_pipeline_zoo().unwrap(),
            vec!["a_first".to_string(), "ara_crop_pipeline".to_string()]
        );
        let info = zoo.get_pipeline_info("ara_crop_pipeline").unwrap();
        assert_eq!(info.manifest.steps.len(), 1);
        assert_eq!(info, zoo.get_pipeline_info("ara_crop_pipeline").unwrap());
    }

    #[test]
    fn unknown_and_duplicate_names() {
        let dir = tempfile::tempdir().unwrap();
        let zoo = PipelineZoo::open(dir.path()).unwrap();
        assert!(matches!(
            zoo.get_pipeline_info("missing"),
            Err(RegistryError::UnknownPipeline(_))
        ));
        zoo.save(&manifest("p")).unwrap();
        assert!(matches!(
            zoo.save(&manifest("p")),
            Err(RegistryError::DuplicatePipeline(_))
        ));
    }
}
