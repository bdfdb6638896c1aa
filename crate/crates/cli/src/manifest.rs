use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct InputDigest {
    pub role: String,
    pub file: String,
    pub sha256: String,
}

/// What a run consumed and how it was configured. Thread counts and wall
/// time are left out so that reruns compare byte for byte.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub inputs: Vec<InputDigest>,
    pub seeds: Vec<u64>,
    pub config: Value,
}

impl RunManifest {
    pub fn new(command: &str, inputs: Vec<InputDigest>, seeds: Vec<u64>, config: Value) -> Self {
        Self { command: command.to_string(), version: env!("CARGO_PKG_VERSION").to_string(), inputs, seeds, config }
    }

    fn compact(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory writer that stamps every file with the run manifest.
pub struct OutDir {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutDir {
    pub fn create(dir: &Path, manifest: RunManifest) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    /// CSV body preceded by `# schema` and `# manifest` comment lines.
    pub fn csv(&mut self, name: &str, schema: &str, body: &[u8]) -> Result<()> {
        let mut out = format!("# schema {schema}\n# manifest {}\n", self.manifest.compact()).into_bytes();
        out.extend_from_slice(body);
        self.put(name, &out)
    }

    /// JSON object with the manifest under the `manifest` key.
    pub fn json(&mut self, name: &str, mut doc: Value) -> Result<()> {
        let obj = doc.as_object_mut().expect("summary documents are objects");
        obj.insert("manifest".into(), serde_json::to_value(&self.manifest)?);
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }
}
