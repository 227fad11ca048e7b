//! Run manifests and all-or-nothing output staging.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record for one finished command. The wall-clock duration is
/// the only field that varies between identically-seeded reruns; determinism
/// checks therefore compare every artifact except this file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    /// The fully-resolved configuration the run used, flags applied.
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub duration_seconds: f64,
}

/// Accumulates a command's output bytes; nothing touches the output
/// directory until [`Run::commit`]. Exactly one manifest lands in it.
pub struct Run {
    command: &'static str,
    dir: PathBuf,
    seed: u64,
    config: serde_json::Value,
    inputs: Vec<String>,
    files: Vec<(String, Vec<u8>)>,
    started: Instant,
}

impl Run {
    pub fn new(command: &'static str, out: &Path, seed: u64, config: serde_json::Value) -> Self {
        Self {
            command,
            dir: out.to_path_buf(),
            seed,
            config,
            inputs: Vec::new(),
            files: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn stage(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// One JSON object per line, trailing newline included.
    pub fn stage_jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        self.stage(name, jsonl_bytes(rows)?);
        Ok(())
    }

    pub fn stage_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.stage(name, json_bytes(value)?);
        Ok(())
    }

    /// Writes all staged files plus the manifest. Every byte goes into a
    /// temp file in the output directory before the first rename, so a
    /// compute error or an unwritable path leaves no partial output behind.
    pub fn commit(mut self) -> Result<()> {
        let outputs = self.files.iter().map(|(n, _)| self.dir.join(n).display().to_string());
        let manifest = RunManifest {
            command: self.command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config: self.config.clone(),
            inputs: self.inputs.clone(),
            outputs: outputs.collect(),
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        self.files.push((MANIFEST_FILE.to_string(), json_bytes(&manifest)?));

        let dir = &self.dir;
        let context = |what: &str, e: std::io::Error| {
            CliError::data(format!("{what} {}: {e}", dir.display()))
        };
        std::fs::create_dir_all(dir).map_err(|e| context("cannot create", e))?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let mut tmp =
                tempfile::NamedTempFile::new_in(dir).map_err(|e| context("cannot write in", e))?;
            tmp.write_all(bytes).and_then(|()| tmp.flush()).map_err(|e| context("writing", e))?;
            staged.push((tmp, dir.join(name)));
        }
        for (tmp, path) in staged {
            tmp.persist(&path)
                .map_err(|e| CliError::data(format!("renaming into {}: {}", path.display(), e.error)))?;
        }
        Ok(())
    }
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::data(format!("serializing output: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn jsonl_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut bytes, row)
            .map_err(|e| CliError::data(format!("serializing output: {e}")))?;
        bytes.push(b'\n');
    }
    Ok(bytes)
}
