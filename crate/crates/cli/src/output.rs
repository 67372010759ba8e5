//! Result files, CSV formatting and the run manifest.

use crate::error::CliError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Builds a CSV body from a header and rows of preformatted cells.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Clone, Debug, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: BTreeMap<String, serde_json::Value>,
    pub stages: Vec<Stage>,
    pub outputs: Vec<FileDigest>,
    /// Copy of `summary.json`, when the command wrote one.
    pub summary: Option<serde_json::Value>,
}

pub const MANIFEST: &str = "manifest.json";

/// Output directory plus the bookkeeping that ends up in the manifest.
#[derive(Debug)]
pub struct RunDir {
    dir: PathBuf,
    stages: Vec<Stage>,
    outputs: Vec<FileDigest>,
    summary: Option<serde_json::Value>,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            stages: Vec::new(),
            outputs: Vec::new(),
            summary: None,
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push(Stage {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.outputs.retain(|d| d.file != name);
        self.outputs.push(FileDigest {
            file: name.to_string(),
            bytes: contents.len(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let value = serde_json::to_value(value).map_err(roughflow::error::Error::from)?;
        let mut text = serde_json::to_string_pretty(&value).map_err(roughflow::error::Error::from)?;
        text.push('\n');
        if name == "summary.json" {
            self.summary = Some(value);
        }
        self.write(name, &text)
    }

    pub fn finish(self, command: &str, config: &BTreeMap<String, serde_json::Value>) -> Result<Manifest, CliError> {
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            stages: self.stages,
            outputs: self.outputs,
            summary: self.summary,
        };
        let path = self.dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&manifest).map_err(roughflow::error::Error::from)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}
