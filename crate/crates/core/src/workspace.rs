//! Confined working directories.
//!
//! Every session owns one artifacts root. Tool arguments and script paths are
//! resolved against it lexically; anything that would land outside the root is
//! rejected before touching the filesystem.

use std::path::{Component, Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("sandbox violation: path `{path}` escapes the working directory")]
    Escape { path: String },
    #[error("failed to prepare working directory {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A directory that all relative paths are resolved against and that no
/// resolved path may leave.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    /// Creates the directory if needed and canonicalizes it.
    pub fn create(root: impl AsRef<Path>) -> Result<Self, WorkspaceError> {
        let root = root.as_ref();
        std::fs::create_dir_all(root).map_err(|source| WorkspaceError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        let root = root.canonicalize().map_err(|source| WorkspaceError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolves `path` (relative to the root, or absolute inside it) to an
    /// absolute path, normalizing `.` and `..` without following symlinks.
    pub fn resolve(&self, path: impl AsRef<Path>) -> Result<PathBuf, WorkspaceError> {
        let path = path.as_ref();
        let joined = if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.root.join(path)
        };
        let normalized = normalize(&joined).ok_or_else(|| WorkspaceError::Escape {
            path: path.display().to_string(),
        })?;
        if normalized.starts_with(&self.root) {
            Ok(normalized)
        } else {
            Err(WorkspaceError::Escape {
                path: path.display().to_string(),
            })
        }
    }

    /// Path relative to the root, with `/` separators.
    pub fn relative(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/")
    }

    /// Lists every regular file below the root (skipping hidden
    /// directories), sorted, with its modification stamp and size.
    pub fn snapshot(&self) -> Vec<(PathBuf, std::time::SystemTime, u64)> {
        let mut out = Vec::new();
        let mut stack = vec![self.root.clone()];
        while let Some(dir) = stack.pop() {
            let Ok(entries) = std::fs::read_dir(&dir) else {
                continue;
            };
            for entry in entries.flatten() {
                let path = entry.path();
                let hidden = entry.file_name().to_string_lossy().starts_with('.');
                let Ok(meta) = entry.metadata() else { continue };
                if meta.is_dir() {
                    if !hidden {
                        stack.push(path);
                    }
                } else if meta.is_file() {
                    let modified = meta.modified().unwrap_or(std::time::UNIX_EPOCH);
                    out.push((path, modified, meta.len()));
                }
            }
        }
        out.sort();
        out
    }

    /// Recursively copies `src` (file or directory) to `dest` inside the root.
    pub fn stage(&self, src: &Path, dest: impl AsRef<Path>) -> Result<PathBuf, WorkspaceError> {
        let target = self.resolve(dest)?;
        copy_recursive(src, &target).map_err(|source| WorkspaceError::Io {
            path: src.to_path_buf(),
            source,
        })?;
        Ok(target)
    }
}

fn copy_recursive(src: &Path, dest: &Path) -> std::io::Result<()> {
    if src.is_dir() {
        std::fs::create_dir_all(dest)?;
        for entry in std::fs::read_dir(src)? {
            let entry = entry?;
            copy_recursive(&entry.path(), &dest.join(entry.file_name()))?;
        }
    } else {
        if let Some(parent) = dest.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::copy(src, dest)?;
    }
    Ok(())
}

/// Lexical normalization. Returns `None` when `..` climbs above the
/// filesystem root.
pub fn normalize(path: &Path) -> Option<PathBuf> {
    let mut out = PathBuf::new();
    for comp in path.components() {
        match comp {
            Component::Prefix(p) => out.push(p.as_os_str()),
            Component::RootDir => out.push("/"),
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    return None;
                }
            }
            Component::Normal(n) => out.push(n),
        }
    }
    Some(out)
}
