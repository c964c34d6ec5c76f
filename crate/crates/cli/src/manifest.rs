//! Per-stage manifests: content hashes, config echo, seed and version.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tailrisk::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    /// The config sections this stage depends on.
    pub config: serde_json::Value,
    /// Input path to sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to the output directory) to sha256.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn manifest_name(stage: &str) -> String {
    format!("{stage}.manifest.json")
}

impl Manifest {
    pub fn read(dir: &Path, stage: &str) -> Option<Manifest> {
        let text = std::fs::read_to_string(dir.join(manifest_name(stage))).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn write(&self, dir: &Path) -> Result<(), Error> {
        let path = dir.join(manifest_name(&self.stage));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    /// True when this manifest was produced from the same inputs and
    /// config and every recorded output is still intact.
    pub fn is_fresh(&self, dir: &Path, config: &serde_json::Value, inputs: &BTreeMap<String, String>) -> bool {
        self.version == env!("CARGO_PKG_VERSION")
            && &self.config == config
            && &self.inputs == inputs
            && self
                .outputs
                .iter()
                .all(|(name, hash)| sha256_file(&dir.join(name)).is_ok_and(|h| &h == hash))
    }
}
