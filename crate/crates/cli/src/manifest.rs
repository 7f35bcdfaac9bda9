//! Run manifests: every command that writes artifacts also writes a manifest
//! echoing the fully resolved settings, the seed, and a CRC32 per artifact.
//! Timing-bearing files (the training log) are listed unhashed so that
//! seeded re-runs stay byte-identical in everything the manifest vouches for.

use anyhow::{Context, Result};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::path::Path;

pub struct Manifest {
    command: &'static str,
    seed: u64,
    settings: BTreeMap<String, Value>,
    artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64) -> Self {
        Manifest {
            command,
            seed,
            settings: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn setting(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.settings.insert(key.to_string(), value.into());
        self
    }

    /// Record an artifact with the CRC32 of its current bytes.
    pub fn artifact(&mut self, path: &Path) -> Result<&mut Self> {
        let name = file_name(path);
        let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        self.artifacts.insert(name, format!("crc32:{:08x}", crc32fast::hash(&bytes)));
        Ok(self)
    }

    /// Record an artifact without a hash, stating why.
    pub fn artifact_unhashed(&mut self, path: &Path, reason: &str) -> &mut Self {
        self.artifacts.insert(file_name(path), format!("unhashed:{reason}"));
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut root = Map::new();
        root.insert("command".into(), self.command.into());
        root.insert("seed".into(), self.seed.into());
        root.insert(
            "settings".into(),
            Value::Object(self.settings.clone().into_iter().collect()),
        );
        root.insert(
            "artifacts".into(),
            Value::Object(
                self.artifacts
                    .iter()
                    .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                    .collect(),
            ),
        );
        let text = serde_json::to_string_pretty(&Value::Object(root))?;
        std::fs::write(path, text + "\n")
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }
}

/// Seed recorded in an existing manifest, used to refuse mismatched resumes.
pub fn read_seed(path: &Path) -> Result<u64> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading manifest {}", path.display()))?;
    let v: Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing manifest {}", path.display()))?;
    v.get("seed")
        .and_then(Value::as_u64)
        .context("manifest has no integer 'seed' field")
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Manifest path accompanying a single-file artifact.
pub fn sibling(out: &Path) -> std::path::PathBuf {
    let mut name = out
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    name.push_str(".manifest.json");
    out.with_file_name(name)
}
