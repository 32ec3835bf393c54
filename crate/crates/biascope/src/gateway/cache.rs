//! Content-addressed store for model call envelopes.
//!
//! Every backend call is wrapped in an [`Envelope`] holding the exact request
//! payload, the raw response body, the backend identity, and a capture
//! timestamp. Envelopes are stored one per file under the cache directory,
//! named by the hex digest of the call identity, so a second identical call
//! returns the recorded bytes without touching the backend.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The kind of backend call, part of the cache identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Generate,
    Embed,
    Frames,
    Entities,
    Sentiment,
    MediaBias,
}

impl CallKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CallKind::Generate => "generate",
            CallKind::Embed => "embed",
            CallKind::Frames => "frames",
            CallKind::Entities => "entities",
            CallKind::Sentiment => "sentiment",
            CallKind::MediaBias => "media_bias",
        }
    }
}

/// Identity of one backend call: a sha-256 hex digest over the call kind,
/// the model name, the canonical JSON payload, and the sampling seed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(kind: CallKind, model: &str, payload: &Value, seed: Option<u64>) -> CacheKey {
        let identity = serde_json::json!({
            "kind": kind.as_str(),
            "model": model,
            "payload": payload,
            "seed": seed,
        });
        let canonical = identity.to_string();
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        CacheKey(hex::encode(hasher.finalize()))
    }

    pub fn as_hex(&self) -> &str {
        &self.0
    }
}

/// One recorded backend call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub backend_id: String,
    pub request: Value,
    pub response: Value,
    pub timestamp: u64,
}

impl Envelope {
    pub fn new(backend_id: String, request: Value, response: Value) -> Envelope {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Envelope { backend_id, request, response, timestamp }
    }
}

/// File-backed envelope store. Writes go through a temporary file and a
/// rename so concurrent readers never observe a partial envelope.
#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn open(dir: &Path) -> Result<Cache> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Cache { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.as_hex()))
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.path_of(key).is_file()
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<Envelope>> {
        let path = self.path_of(key);
        let bytes = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let envelope = serde_json::from_slice(&bytes)?;
        Ok(Some(envelope))
    }

    pub fn put(&self, key: &CacheKey, envelope: &Envelope) -> Result<()> {
        let path = self.path_of(key);
        let tmp = self.dir.join(format!(
            ".{}.{}.tmp",
            key.as_hex(),
            std::process::id()
        ));
        let bytes = serde_json::to_vec(envelope)?;
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}
