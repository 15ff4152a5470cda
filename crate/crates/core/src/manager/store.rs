use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{ManagerError, SessionEvent};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const ARTIFACTS_DIR: &str = "artifacts";

/// Session directories under one root: `{root}/{session_id}/events.jsonl`
/// and `{root}/{session_id}/artifacts/`.
#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl SessionStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, id: &str) -> Result<PathBuf, ManagerError> {
        if !valid_id(id) {
            return Err(ManagerError::UnknownSession(id.to_owned()));
        }
        Ok(self.root.join(id))
    }

    pub fn events_path(&self, id: &str) -> Result<PathBuf, ManagerError> {
        Ok(self.session_dir(id)?.join(EVENTS_FILE))
    }

    pub fn artifacts_dir(&self, id: &str) -> Result<PathBuf, ManagerError> {
        Ok(self.session_dir(id)?.join(ARTIFACTS_DIR))
    }

    pub fn exists(&self, id: &str) -> bool {
        self.events_path(id).is_ok_and(|p| p.is_file())
    }

    /// Appends one event as a single line. The line is written with one
    /// `write_all` on an append-mode handle so readers never see half of it
    /// followed by another event.
    pub fn append(&self, id: &str, event: &SessionEvent) -> Result<(), ManagerError> {
        let path = self.events_path(id)?;
        let mut line = serde_json::to_string(event).map_err(|e| ManagerError::Store(e.to_string()))?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| ManagerError::Store(format!("{}: {e}", path.display())))?;
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| ManagerError::Store(format!("{}: {e}", path.display())))
    }

    /// Events with `seq >= from_seq`. An incomplete trailing line (a write
    /// in progress) is ignored.
    pub fn read_events(&self, id: &str, from_seq: u64) -> Result<Vec<SessionEvent>, ManagerError> {
        let path = self.events_path(id)?;
        let f = File::open(&path).map_err(|_| ManagerError::UnknownSession(id.to_owned()))?;
        let mut reader = BufReader::new(f);
        let mut out = Vec::new();
        let mut buf = String::new();
        loop {
            buf.clear();
            let n = reader
                .read_line(&mut buf)
                .map_err(|e| ManagerError::Store(format!("{}: {e}", path.display())))?;
            if n == 0 || !buf.ends_with('\n') {
                break;
            }
            let event: SessionEvent = serde_json::from_str(buf.trim_end())
                .map_err(|e| ManagerError::Store(format!("{}: {e}", path.display())))?;
            if event.seq >= from_seq {
                out.push(event);
            }
        }
        Ok(out)
    }

    /// Session ids with a transcript, sorted.
    pub fn list(&self) -> Vec<String> {
        let mut ids: Vec<String> = std::fs::read_dir(&self.root)
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|id| self.exists(id))
            .collect();
        ids.sort();
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manager::EventKind;
    use serde_json::json;

    #[test]
    fn append_and_read_from_seq() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::new(dir.path());
        std::fs::create_dir_all(store.session_dir("s1").unwrap()).unwrap();
        for seq in 0..5 {
            let e = SessionEvent {
                seq,
                kind: EventKind::AssistantMessage,
                payload: json!({"text": seq}),
                timestamp: String::new(),
            };
            store.append("s1", &e).unwrap();
        }
        let tail = store.read_events("s1", 3).unwrap();
        assert_eq!(tail.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![3, 4]);
        assert_eq!(store.list(), vec!["s1".to_owned()]);
        assert!(store.session_dir("../x").is_err());
    }

    #[test]
    fn partial_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::new(dir.path());
        let d = store.session_dir("s").unwrap();
        std::fs::create_dir_all(&d).unwrap();
        std::fs::write(d.join(EVENTS_FILE), "{\"seq\":0,\"kind\":\"plan\",\"payload\":{},\"timestamp\":\"\"}\n{\"seq\":1").unwrap();
        assert_eq!(store.read_events("s", 0).unwrap().len(), 1);
    }
}
