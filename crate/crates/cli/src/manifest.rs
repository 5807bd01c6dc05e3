//! `manifest.json`, written next to every command's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Digest256 {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<Digest256>,
    /// Paths relative to the output directory.
    pub outputs: Vec<Digest256>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds.insert(name.to_string(), seed);
        self
    }

    /// Records a file, a directory (digest over its sorted contents) or a
    /// builtin graph name.
    pub fn input(mut self, spec: &str) -> Result<Self, CliError> {
        let sha256 = if crate::graphs::BUILTIN.contains(&spec) {
            hex(&Sha256::digest(format!("builtin:{spec}")))
        } else {
            digest_path(Path::new(spec))?
        };
        self.inputs.push(Digest256 {
            path: spec.to_string(),
            sha256,
        });
        Ok(self)
    }

    /// Digests everything under `out` and writes the manifest there.
    pub fn finish(mut self, out: &Path) -> Result<(), CliError> {
        self.outputs = files_under(out)?
            .into_iter()
            .filter(|p| p != Path::new(FILE))
            .map(|rel| {
                Ok(Digest256 {
                    sha256: hex(&Sha256::digest(fs::read(out.join(&rel))?)),
                    path: rel.to_string_lossy().into_owned(),
                })
            })
            .collect::<Result<_, CliError>>()?;
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        fs::write(out.join(FILE), text)?;
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Sorted relative paths of every regular file below `root`.
fn files_under(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        for entry in fs::read_dir(root.join(&rel))? {
            let entry = entry?;
            let child = rel.join(entry.file_name());
            if entry.file_type()?.is_dir() {
                stack.push(child);
            } else {
                out.push(child);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn digest_path(path: &Path) -> Result<String, CliError> {
    if path.is_file() {
        return Ok(hex(&Sha256::digest(fs::read(path)?)));
    }
    let mut h = Sha256::new();
    for rel in files_under(path)? {
        if rel == Path::new(FILE) {
            continue;
        }
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(path.join(&rel))?);
        h.update([0]);
    }
    Ok(hex(&h.finalize()))
}
