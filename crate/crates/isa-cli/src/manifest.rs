//! Run manifests: every artifact-producing command records enough to
//! reproduce itself bit-for-bit (single-worker mode) next to its outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use isa_core::{Error, Result};

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// Fully resolved configuration, defaults included.
    pub config: Value,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: String,
    pub wall_secs: f64,
}

pub struct ManifestBuilder {
    command: String,
    config: Value,
    seed: u64,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: Value, seed: u64) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Writes `<target>` as JSON and returns the manifest path.
    pub fn write(self, target: &Path) -> Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            config: self.config,
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_secs: self.started.elapsed().as_secs_f64(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))?;
        std::fs::write(target, json).map_err(|source| Error::Io {
            path: target.to_path_buf(),
            source,
        })?;
        Ok(target.to_path_buf())
    }
}

/// `<output>.<suffix>`, keeping the original file name intact.
pub fn sibling_path(output: &Path, suffix: &str) -> PathBuf {
    let mut name = output
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    name.push('.');
    name.push_str(suffix);
    output.with_file_name(name)
}

/// Manifest path for a single-artifact command: `<output>.manifest.json`.
pub fn sibling_manifest_path(output: &Path) -> PathBuf {
    sibling_path(output, "manifest.json")
}
