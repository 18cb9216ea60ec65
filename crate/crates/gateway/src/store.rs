//! On-disk session records, one JSON file per session.

use std::path::{Path, PathBuf};

use autograms::authoring::GraphDocument;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("session store {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("session record {path} is corrupt: {msg}")]
    Corrupt { path: PathBuf, msg: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphRef {
    /// The graph the server was started with.
    Server { source: String },
    Inline { document: GraphDocument },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub graph: GraphRef,
    /// Current graph of a self-referential session.
    #[serde(default)]
    pub live_graph: Option<GraphDocument>,
    pub memory: serde_json::Value,
    pub backend_mode: String,
    #[serde(default)]
    pub backend_state: serde_json::Value,
    pub seed: u64,
    pub turn_count: usize,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub turn_count: usize,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

/// Ids are generated by the server; anything else is rejected before it
/// reaches the filesystem.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

#[derive(Clone, Debug)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|source| StoreError::Io { path: dir.clone(), source })?;
        Ok(SessionStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Writes through a temporary file so a crash never leaves half a record.
    pub fn save(&self, record: &SessionRecord) -> Result<(), StoreError> {
        let path = self.path(&record.session_id);
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(record).expect("record serializes");
        std::fs::write(&tmp, text).map_err(|source| StoreError::Io { path: tmp.clone(), source })?;
        std::fs::rename(&tmp, &path).map_err(|source| StoreError::Io { path, source })
    }

    pub fn load(&self, id: &str) -> Result<Option<SessionRecord>, StoreError> {
        if !valid_id(id) {
            return Ok(None);
        }
        let path = self.path(id);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        serde_json::from_str(&text).map(Some).map_err(|e| StoreError::Corrupt { path, msg: e.to_string() })
    }

    /// Summaries of every stored session, oldest first.
    pub fn list(&self) -> Result<Vec<SessionSummary>, StoreError> {
        let entries = std::fs::read_dir(&self.dir).map_err(|source| StoreError::Io { path: self.dir.clone(), source })?;
        let mut out = Vec::new();
        for e in entries {
            let e = e.map_err(|source| StoreError::Io { path: self.dir.clone(), source })?;
            let name = e.file_name().to_string_lossy().to_string();
            let Some(id) = name.strip_suffix(".json") else { continue };
            if let Some(r) = self.load(id)? {
                out.push(SessionSummary {
                    session_id: r.session_id,
                    turn_count: r.turn_count,
                    created_at: r.created_at,
                    updated_at: r.updated_at,
                });
            }
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.session_id.cmp(&b.session_id)));
        Ok(out)
    }
}
