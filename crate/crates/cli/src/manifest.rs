//! Run manifests written next to every output.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
        let mut hasher = Sha256::new();
        let mut buf = vec![0u8; 1 << 16];
        let mut bytes = 0u64;
        loop {
            let n = reader.read(&mut buf)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            bytes += n as u64;
        }
        Ok(Self {
            path: path.display().to_string(),
            bytes,
            sha256: hex::encode(hasher.finalize()),
        })
    }
}

/// Everything needed to repeat a run. Carries no timestamps or host details,
/// so reruns write identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, with any generated seed filled in.
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_hash: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub summary: serde_json::Value,
}

/// What a command reports back for its manifest.
#[derive(Debug, Default)]
pub struct RunRecord {
    pub config: serde_json::Value,
    pub vocab_hash: Option<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

impl Manifest {
    pub fn build(command: &str, args: Vec<String>, seed: Option<u64>, record: &RunRecord) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args,
            seed,
            config: record.config.clone(),
            vocab_hash: record.vocab_hash.clone(),
            inputs: record.inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            outputs: record.outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            summary: record.summary.clone(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        std::fs::write(&p, "abc").unwrap();
        let d = FileDigest::of(&p).unwrap();
        assert_eq!(d.bytes, 3);
        assert_eq!(d.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_sits_beside_output() {
        assert_eq!(manifest_path(Path::new("out/gen.jsonl")), Path::new("out/gen.jsonl.manifest.json"));
        assert_eq!(manifest_path(Path::new("svg")), Path::new("svg.manifest.json"));
    }
}
