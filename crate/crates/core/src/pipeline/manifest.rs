//! Run manifest, artifact hashing and the run-directory lock.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = "run.lock";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(h.finalize()))
}

/// Hash of a JSON-serialisable value.
pub fn hash_value<T: Serialize>(v: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(v)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash of the stage's config section chained with its upstream key.
    pub key: String,
    pub artifacts: Vec<Artifact>,
    pub wall_seconds: f64,
    pub finished_unix: u64,
    pub cache_hits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new() -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: String::new(),
            config: serde_json::Value::Null,
            stages: BTreeMap::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let p = dir.join(MANIFEST_FILE);
        if !p.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    /// Write through a temporary file and rename.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let p = dir.join(MANIFEST_FILE);
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &p).map_err(|e| Error::io(&p, e))
    }

    /// True when `stage` finished with `key` and its files are unchanged.
    pub fn is_current(&self, dir: &Path, stage: &str, key: &str) -> bool {
        let Some(rec) = self.stages.get(stage) else {
            return false;
        };
        rec.key == key
            && rec.artifacts.iter().all(|a| {
                let p = dir.join(&a.path);
                sha256_file(&p).is_ok_and(|h| h == a.sha256)
            })
    }

    pub fn record(&mut self, dir: &Path, stage: &str, key: String, files: &[PathBuf], wall_seconds: f64) -> Result<()> {
        let mut artifacts = Vec::with_capacity(files.len());
        for f in files {
            let rel = f.strip_prefix(dir).unwrap_or(f);
            let path = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            if self
                .stages
                .iter()
                .any(|(s, r)| s != stage && r.artifacts.iter().any(|a| a.path == path))
            {
                return Err(Error::Invariant(format!("{path} is already owned by another stage")));
            }
            let meta = std::fs::metadata(f).map_err(|e| Error::io(f, e))?;
            artifacts.push(Artifact {
                path,
                sha256: sha256_file(f)?,
                bytes: meta.len(),
            });
        }
        let finished_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                key,
                artifacts,
                wall_seconds,
                finished_unix,
                cache_hits: 0,
            },
        );
        Ok(())
    }

    pub fn note_cache_hit(&mut self, stage: &str) {
        if let Some(r) = self.stages.get_mut(stage) {
            r.cache_hits += 1;
        }
    }

    /// Drop the records of `stages`, e.g. everything downstream of a stage
    /// that was just recomputed.
    pub fn invalidate(&mut self, stages: &[&str]) {
        for s in stages {
            if self.stages.remove(*s).is_some() {
                log::info!("invalidated stage {s}");
            }
        }
    }
}

impl Default for RunManifest {
    fn default() -> Self {
        Self::new()
    }
}

/// Exclusive lock on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
