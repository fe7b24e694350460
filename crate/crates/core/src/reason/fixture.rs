//! Content-addressed record/replay store for model service calls.
//!
//! Each entry is `<digest>.json` (the response) plus `<digest>.meta.json`
//! (`{role, template_version, timestamp}`), where the digest is the SHA-256
//! of the canonical request encoding: compact JSON with object keys sorted
//! at every level.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::ReasonError;
use crate::transport::Transport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    StatePrompts,
    Edit,
    T2i,
    Segment,
    DirectMotion,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::StatePrompts => "state_prompts",
            Role::Edit => "edit",
            Role::T2i => "t2i",
            Role::Segment => "segment",
            Role::DirectMotion => "direct_motion",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One model service request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub template_version: String,
    pub role: Role,
    pub prompt: String,
    /// Base64-encoded binary PPM/PGM images.
    pub images: Vec<String>,
    pub labels: Vec<String>,
}

impl WireRequest {
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("request serializes")
    }

    pub fn digest(&self) -> String {
        digest_value(&self.to_value())
    }
}

/// Compact JSON with sorted object keys.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

pub fn digest_value(value: &Value) -> String {
    hex::encode(Sha256::digest(canonical_json(value).as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureMode {
    /// Replay known digests, call the backend and store novel ones.
    Record,
    /// Serve from fixtures only; a missing digest is an error.
    Replay,
    /// Always call the backend; store nothing.
    Passthrough,
}

impl FromStr for FixtureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "record" => Ok(FixtureMode::Record),
            "replay" => Ok(FixtureMode::Replay),
            "passthrough" => Ok(FixtureMode::Passthrough),
            other => Err(format!("unknown mode '{other}' (record|replay|passthrough)")),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryMeta {
    role: Role,
    template_version: String,
    timestamp: u64,
}

#[derive(Debug)]
pub struct FixtureStore {
    dir: PathBuf,
    mode: FixtureMode,
    write_lock: Mutex<()>,
}

impl FixtureStore {
    pub fn new(dir: impl Into<PathBuf>, mode: FixtureMode) -> Self {
        Self {
            dir: dir.into(),
            mode,
            write_lock: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn mode(&self) -> FixtureMode {
        self.mode
    }

    fn entry_path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    fn meta_path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.meta.json"))
    }

    pub fn contains(&self, digest: &str) -> bool {
        self.entry_path(digest).is_file()
    }

    /// Number of stored responses.
    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|entries| {
                entries
                    .filter_map(Result::ok)
                    .filter(|e| {
                        let name = e.file_name();
                        let name = name.to_string_lossy();
                        name.ends_with(".json") && !name.ends_with(".meta.json")
                    })
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn load(&self, digest: &str) -> Result<Value, ReasonError> {
        let path = self.entry_path(digest);
        let text = fs::read_to_string(&path).map_err(|e| ReasonError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| ReasonError::Malformed {
            digest: digest.to_string(),
            message: format!("fixture is not JSON: {e}"),
        })
    }

    fn store(&self, digest: &str, request: &WireRequest, response: &Value) -> Result<(), ReasonError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        if self.contains(digest) {
            return Ok(());
        }
        fs::create_dir_all(&self.dir).map_err(|e| ReasonError::io(&self.dir, e))?;
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let meta = EntryMeta {
            role: request.role,
            template_version: request.template_version.clone(),
            timestamp,
        };
        let meta_path = self.meta_path(digest);
        fs::write(&meta_path, serde_json::to_string_pretty(&meta).unwrap() + "\n")
            .map_err(|e| ReasonError::io(&meta_path, e))?;
        let path = self.entry_path(digest);
        fs::write(&path, serde_json::to_string_pretty(response).unwrap() + "\n")
            .map_err(|e| ReasonError::io(&path, e))
    }

    /// Resolves `request` according to the store mode. Returns the digest
    /// alongside the response.
    pub fn call(&self, transport: &dyn Transport, request: &WireRequest) -> Result<(String, Value), ReasonError> {
        let digest = request.digest();
        let response = match self.mode {
            FixtureMode::Replay => {
                if !self.contains(&digest) {
                    return Err(ReasonError::FixtureMiss {
                        digest,
                        role: request.role,
                    });
                }
                self.load(&digest)?
            }
            FixtureMode::Record => {
                if self.contains(&digest) {
                    self.load(&digest)?
                } else {
                    let response = transport.exchange(&request.to_value())?;
                    self.store(&digest, request, &response)?;
                    response
                }
            }
            FixtureMode::Passthrough => transport.exchange(&request.to_value())?,
        };
        Ok((digest, response))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form_sorts_nested_keys() {
        let v: Value = serde_json::from_str(r#"{"b": [ {"z": 1, "a": 2} ], "a": "x\"y"}"#).unwrap();
        assert_eq!(canonical_json(&v), r#"{"a":"x\"y","b":[{"a":2,"z":1}]}"#);
    }

    #[test]
    fn digest_ignores_field_order() {
        let a: Value = serde_json::from_str(
            r#"{"template_version":"t","role":"t2i","prompt":"p","images":[],"labels":["a"]}"#,
        )
        .unwrap();
        let b: Value = serde_json::from_str(
            r#"{"labels":["a"],"images":[],"prompt":"p","role":"t2i","template_version":"t"}"#,
        )
        .unwrap();
        assert_eq!(digest_value(&a), digest_value(&b));
        let req: WireRequest = serde_json::from_value(b).unwrap();
        assert_eq!(req.digest(), digest_value(&a));
        assert_eq!(req.digest().len(), 64);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("replay".parse::<FixtureMode>().unwrap(), FixtureMode::Replay);
        assert!("live".parse::<FixtureMode>().is_err());
    }
}
