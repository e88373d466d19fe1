//! Run manifests: what a command read and wrote, with content hashes.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use pvbench_core::data::io::write_file;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileEntry {
    /// Hashes `path`, recording it under `label`.
    pub fn of(path: &Path, label: impl Into<String>) -> anyhow::Result<Self> {
        let data = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        Ok(Self {
            path: label.into(),
            bytes: data.len() as u64,
            sha256: sha256_hex(&data),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: Option<FileEntry>,
    pub inputs: Vec<FileEntry>,
    /// Paths relative to the manifest's directory.
    pub outputs: Vec<FileEntry>,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, config: Option<FileEntry>) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            command: command.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Records the named files inside `dir` as outputs.
    pub fn add_outputs(&mut self, dir: &Path, names: &[String]) -> anyhow::Result<()> {
        for name in names {
            self.outputs.push(FileEntry::of(&dir.join(name), name.clone())?);
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        write_file(path, |w| writeln!(w, "{json}"))?;
        Ok(())
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    format!("{:x}", Sha256::digest(data))
}
