//! Record/replay cassettes: newline-delimited JSON, append-only.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::types::Completion;

/// One cassette line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CassetteRecord {
    pub fingerprint: String,
    pub request: serde_json::Value,
    pub completion: Completion,
}

impl CassetteRecord {
    /// Build a record for a request, fingerprinting it the same way the
    /// gateway does (fixture cassettes stay interchangeable with recorded
    /// ones).
    pub fn new(request: &crate::gateway::types::ChatRequest, completion: Completion) -> Self {
        Self {
            fingerprint: crate::gateway::fingerprint::fingerprint(request),
            request: request.wire_body(),
            completion,
        }
    }
}

/// An on-disk store of completions keyed by request fingerprint. Appends
/// are serialized; lookups are read-only. On duplicate fingerprints the
/// last record wins, so re-recording a run overrides older entries.
#[derive(Debug)]
pub struct Cassette {
    path: PathBuf,
    entries: Mutex<BTreeMap<String, Completion>>,
}

impl Cassette {
    /// Open for replay: the file must exist and every line must parse.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: CassetteRecord =
                serde_json::from_str(line).map_err(|e| Error::CassetteLoad {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            entries.insert(record.fingerprint, record.completion);
        }
        Ok(Self { path: path.to_path_buf(), entries: Mutex::new(entries) })
    }

    /// Open for recording: loads existing entries when the file exists so a
    /// partial run can resume, otherwise starts empty.
    pub fn open_for_record(path: &Path) -> Result<Self> {
        if path.exists() {
            Self::load(path)
        } else {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(path, "")?;
            Ok(Self { path: path.to_path_buf(), entries: Mutex::new(BTreeMap::new()) })
        }
    }

    pub fn get(&self, fingerprint: &str) -> Option<Completion> {
        self.entries.lock().unwrap().get(fingerprint).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fingerprints(&self) -> Vec<String> {
        self.entries.lock().unwrap().keys().cloned().collect()
    }

    /// Append one record and update the in-memory index.
    pub fn append(&self, record: CassetteRecord) -> Result<()> {
        let line = serde_json::to_string(&record).expect("record serializes");
        let mut entries = self.entries.lock().unwrap();
        let mut file = OpenOptions::new().append(true).open(&self.path)?;
        writeln!(file, "{line}")?;
        entries.insert(record.fingerprint, record.completion);
        Ok(())
    }
}
