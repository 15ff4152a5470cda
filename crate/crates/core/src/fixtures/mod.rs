//! Deterministic datasets and recorded model turns for offline runs of the
//! end-to-end scenarios. Used by the tests, the examples and `phenoflow run`.

pub mod case1;

use std::path::Path;

use crate::registry::{ModelZoo, ModelZooEntry, RegistryError};

/// Registers entries that are not in the zoo yet.
pub fn install_models(zoo: &ModelZoo, entries: &[ModelZooEntry]) -> Result<usize, RegistryError> {
    let mut added = 0;
    for e in entries {
        if zoo.find(&e.identifier)?.is_none() {
            zoo.register(e.clone())?;
            added += 1;
        }
    }
    Ok(added)
}

pub(crate) fn write_text(root: &Path, rel: &str, text: &str) -> std::io::Result<()> {
    let path = root.join(rel);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)
}
