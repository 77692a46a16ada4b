// SPDX-License-Identifier: MIT OR Apache-2.0

//! Output files, digests and the run manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentKind, Params};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub field: String,
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(field: impl Into<String>, path: &Path) -> io::Result<Self> {
        Ok(Self {
            field: field.into(),
            path: path.display().to_string(),
            sha256: sha256_hex(&fs::read(path)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputDigest {
    /// Relative to the output directory, `/`-separated.
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool_version: String,
    pub kind: ExperimentKind,
    pub parameters: Params,
    /// `y(u)` orientation of mediation runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orientation: Option<String>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<OutputDigest>,
    /// Varies between otherwise identical runs.
    pub wall_time_ms: u64,
}

/// Collects files written under one directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<OutputDigest>,
}

impl OutputDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_owned(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.written.retain(|d| d.file != rel);
        self.written.push(OutputDigest {
            file: rel.to_owned(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn into_written(self) -> Vec<OutputDigest> {
        self.written
    }
}

/// CSV bytes with a header row and `\n` line endings.
pub fn csv_bytes<R, I>(header: &[&str], rows: R) -> io::Result<Vec<u8>>
where
    R: IntoIterator<Item = I>,
    I: IntoIterator,
    I::Item: AsRef<[u8]>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}
