//! Recorded model exchanges for offline replay.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{ChatRequest, ExchangeStatus, GatewayError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub request: ChatRequest,
    pub response_text: String,
    pub status: ExchangeStatus,
}

/// A JSONL file of [`CassetteEntry`] rows. Appends are serialized.
#[derive(Debug)]
pub struct Cassette {
    path: PathBuf,
    entries: Mutex<HashMap<String, Vec<CassetteEntry>>>,
    writer: Mutex<Option<File>>,
}

impl Cassette {
    /// Opens `path`, loading any existing rows. A missing file is an empty
    /// cassette.
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let mut entries: HashMap<String, Vec<CassetteEntry>> = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| GatewayError::Cassette(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| {
                    GatewayError::Cassette(format!("{} line {}: {e}", path.display(), i + 1))
                })?;
                entries.entry(entry.fingerprint.clone()).or_default().push(entry);
            }
        }
        Ok(Cassette {
            path: path.to_path_buf(),
            entries: Mutex::new(entries),
            writer: Mutex::new(None),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.lock().values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The entry recorded for exactly this request. Entries sharing a
    /// fingerprint are told apart by comparing the full request.
    pub fn lookup(&self, fingerprint: &str, request: &ChatRequest) -> Option<CassetteEntry> {
        let entries = self.entries.lock();
        entries
            .get(fingerprint)?
            .iter()
            .rev()
            .find(|e| &e.request == request)
            .cloned()
    }

    pub fn append(&self, entry: CassetteEntry) -> Result<(), GatewayError> {
        let mut line = serde_json::to_vec(&entry).map_err(|e| GatewayError::Cassette(e.to_string()))?;
        line.push(b'\n');
        let mut writer = self.writer.lock();
        if writer.is_none() {
            if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| GatewayError::Cassette(e.to_string()))?;
            }
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(|e| GatewayError::Cassette(format!("{}: {e}", self.path.display())))?;
            *writer = Some(f);
        }
        let f = writer.as_mut().expect("writer opened above");
        f.write_all(&line)
            .and_then(|_| f.flush())
            .map_err(|e| GatewayError::Cassette(e.to_string()))?;
        self.entries
            .lock()
            .entry(entry.fingerprint.clone())
            .or_default()
            .push(entry);
        Ok(())
    }
}
