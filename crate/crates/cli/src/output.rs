//! Staged, all-or-nothing file output and run manifests.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use tempfile::NamedTempFile;
use typegate::corpus::CorpusHeader;

/// Bad arguments or unreadable input; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub header: Option<CorpusHeader>,
    pub counts: BTreeMap<String, usize>,
    pub tool_version: String,
    /// Excluded from reproducibility comparisons.
    pub wall_time_ms: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seed: Option<u64>, inputs: &[&Path]) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: Vec::new(),
            header: None,
            counts: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_ms: 0,
        }
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Outputs are written to temporary files next to their destination and
/// only renamed into place by [`Staged::commit`], so a failing command
/// leaves nothing behind.
#[derive(Default)]
pub struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staged {
    pub fn add(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = NamedTempFile::new_in(dir).map_err(|e| usage(format!("cannot write to {}: {e}", dir.display())))?;
        tmp.write_all(bytes)?;
        tmp.flush()?;
        self.files.push((tmp, path.to_path_buf()));
        Ok(())
    }

    /// Stages the primary output plus its manifest.
    pub fn add_with_manifest(&mut self, path: &Path, bytes: &[u8], mut manifest: RunManifest, started: Instant) -> Result<()> {
        manifest.outputs.push(path.display().to_string());
        manifest.wall_time_ms = started.elapsed().as_millis() as u64;
        self.add(path, bytes)?;
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        self.add(&manifest_path(path), &json)
    }

    pub fn commit(self) -> Result<()> {
        for (tmp, path) in self.files {
            tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(manifest_path(Path::new("out/eval.csv")), Path::new("out/eval.csv.manifest.json"));
        assert_eq!(manifest_path(Path::new("c.jsonl")), Path::new("c.jsonl.manifest.json"));
    }

    #[test]
    fn nothing_lands_until_commit() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("a.txt");
        let mut staged = Staged::default();
        staged.add(&target, b"hello").unwrap();
        assert!(!target.exists());
        staged.commit().unwrap();
        assert_eq!(std::fs::read_to_string(&target).unwrap(), "hello");

        let mut dropped = Staged::default();
        dropped.add(&dir.path().join("b.txt"), b"x").unwrap();
        drop(dropped);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
