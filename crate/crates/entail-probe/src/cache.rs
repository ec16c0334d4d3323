//! Append-only JSON-lines response cache.
//!
//! Each line holds one [`CacheEntry`]. Entries are flushed as soon as they
//! are written, so an interrupted run keeps everything it finished; a torn
//! final line is ignored on the next load.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use entail_probe_core::ModelResponse;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    /// SHA-256 of the prompt text.
    pub request_digest: String,
    pub response: ModelResponse,
    /// Seconds since the Unix epoch when the entry was written.
    pub timestamp: u64,
}

/// Hash of everything that determines a response. `scope` carries extra
/// identity for backends whose answer is not a function of the prompt alone.
pub fn cache_key(backend_id: &str, prompt: &str, sampling: &str, scope: &str) -> String {
    let mut h = Sha256::new();
    for part in [backend_id, prompt, sampling, scope] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, ModelResponse>>,
    file: Option<Mutex<File>>,
    skipped_lines: usize,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            path: None,
            entries: Mutex::new(HashMap::new()),
            file: None,
            skipped_lines: 0,
        }
    }

    /// Loads an existing cache file (if any) and opens it for appending.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        let mut skipped_lines = 0;
        let mut needs_newline = false;
        if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            needs_newline = !text.is_empty() && !text.ends_with('\n');
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                match serde_json::from_str::<CacheEntry>(line) {
                    Ok(e) => {
                        entries.insert(e.key, e.response);
                    }
                    Err(_) => skipped_lines += 1,
                }
            }
        } else if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if needs_newline {
            file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(ResponseCache {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
            file: Some(Mutex::new(file)),
            skipped_lines,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Lines that could not be parsed when the cache was loaded.
    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A hit comes back with `cached = true`.
    pub fn get(&self, key: &str) -> Option<ModelResponse> {
        let mut r = self.entries.lock().expect("cache lock").get(key).cloned()?;
        r.cached = true;
        Some(r)
    }

    /// Persists the entry before making it visible to `get`.
    pub fn put(&self, key: &str, prompt: &str, response: &ModelResponse) -> Result<()> {
        let mut stored = response.clone();
        stored.cached = false;
        if let Some(file) = &self.file {
            let entry = CacheEntry {
                key: key.to_string(),
                request_digest: hex::encode(Sha256::digest(prompt.as_bytes())),
                response: stored.clone(),
                timestamp: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            };
            let mut line = serde_json::to_string(&entry).map_err(|e| Error::data(e.to_string()))?;
            line.push('\n');
            let path = self.path.as_deref().unwrap_or(Path::new("cache"));
            let mut f = file.lock().expect("cache file lock");
            f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
            f.flush().map_err(|e| Error::io(path, e))?;
        }
        self.entries.lock().expect("cache lock").insert(key.to_string(), stored);
        Ok(())
    }

    /// Digest of the cached responses independent of write order and
    /// timestamps.
    pub fn content_digest(&self) -> String {
        let entries = self.entries.lock().expect("cache lock");
        let mut keys: Vec<&String> = entries.keys().collect();
        keys.sort();
        let mut h = Sha256::new();
        for k in keys {
            h.update(k.as_bytes());
            h.update(serde_json::to_vec(&entries[k]).unwrap_or_default());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}
