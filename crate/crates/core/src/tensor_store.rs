// SPDX-License-Identifier: MIT OR Apache-2.0

//! `MLAB` v1: a flat binary container for named `f32` tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MLAB" | u32 version=1 | u32 entry count
//! per entry: u32 name len | name bytes | u8 dtype (0 = f32) | u8 ndim
//!            | ndim x u64 dims | raw f32 payload (row-major, last dim fastest)
//! ```

use std::collections::HashSet;
use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"MLAB";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("duplicate tensor name `{0}`")]
    DuplicateTensor(String),
    #[error("tensor `{name}`: dims {dims:?} imply {expected} elements but data has {actual}")]
    ShapeMismatch {
        name: String,
        dims: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("tensor `{0}` has empty or zero-sized dims")]
    BadDims(String),
    #[error("stream is not an MLAB archive")]
    NotAnArchive,
    #[error("unsupported archive version {0}")]
    UnsupportedVersion(u32),
    #[error("archive truncated")]
    Truncated,
    #[error("unsupported dtype tag {0}")]
    UnsupportedDtype(u8),
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One named tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorEntry {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            dims,
            data,
        }
    }

    fn validate(&self) -> Result<(), ArchiveError> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(ArchiveError::BadDims(self.name.clone()));
        }
        let expected: usize = self.dims.iter().product();
        if expected != self.data.len() {
            return Err(ArchiveError::ShapeMismatch {
                name: self.name.clone(),
                dims: self.dims.clone(),
                expected,
                actual: self.data.len(),
            });
        }
        Ok(())
    }
}

/// Ordered collection of uniquely named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorArchive {
    entries: Vec<TensorEntry>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an archive, checking every invariant.
    pub fn from_entries(entries: Vec<TensorEntry>) -> Result<Self, ArchiveError> {
        let archive = Self { entries };
        archive.validate()?;
        Ok(archive)
    }

    pub fn push(&mut self, entry: TensorEntry) -> Result<(), ArchiveError> {
        entry.validate()?;
        if self.get(&entry.name).is_some() {
            return Err(ArchiveError::DuplicateTensor(entry.name));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&TensorEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate(&self) -> Result<(), ArchiveError> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        for entry in &self.entries {
            entry.validate()?;
            if !seen.insert(entry.name.as_str()) {
                return Err(ArchiveError::DuplicateTensor(entry.name.clone()));
            }
        }
        Ok(())
    }
}

/// Serializes `archive`, returning the number of bytes written.
pub fn write_archive<W: Write>(archive: &TensorArchive, mut dst: W) -> Result<u64, ArchiveError> {
    archive.validate()?;
    let mut written = 0u64;
    let mut put = |bytes: &[u8]| -> io::Result<()> {
        dst.write_all(bytes)?;
        written += bytes.len() as u64;
        Ok(())
    };

    put(MAGIC)?;
    put(&VERSION.to_le_bytes())?;
    put(&(archive.entries.len() as u32).to_le_bytes())?;
    for entry in &archive.entries {
        let name = entry.name.as_bytes();
        put(&(name.len() as u32).to_le_bytes())?;
        put(name)?;
        put(&[DTYPE_F32, entry.dims.len() as u8])?;
        for &d in &entry.dims {
            put(&(d as u64).to_le_bytes())?;
        }
        let mut payload = Vec::with_capacity(entry.data.len() * 4);
        for v in &entry.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        put(&payload)?;
    }
    Ok(written)
}

/// Serializes into an owned buffer.
pub fn to_bytes(archive: &TensorArchive) -> Result<Vec<u8>, ArchiveError> {
    let mut buf = Vec::new();
    write_archive(archive, &mut buf)?;
    Ok(buf)
}

fn read_exact<R: Read>(src: &mut R, buf: &mut [u8]) -> Result<(), ArchiveError> {
    src.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ArchiveError::Truncated,
        _ => ArchiveError::Io(e),
    })
}

fn read_u32<R: Read>(src: &mut R) -> Result<u32, ArchiveError> {
    let mut b = [0u8; 4];
    read_exact(src, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(src: &mut R) -> Result<u64, ArchiveError> {
    let mut b = [0u8; 8];
    read_exact(src, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Parses an archive and re-validates its invariants.
pub fn read_archive<R: Read>(mut src: R) -> Result<TensorArchive, ArchiveError> {
    let mut magic = [0u8; 4];
    src.read_exact(&mut magic)
        .map_err(|_| ArchiveError::NotAnArchive)?;
    if &magic != MAGIC {
        return Err(ArchiveError::NotAnArchive);
    }
    let version = read_u32(&mut src)?;
    if version != VERSION {
        return Err(ArchiveError::UnsupportedVersion(version));
    }
    let count = read_u32(&mut src)? as usize;

    let mut archive = TensorArchive::new();
    for _ in 0..count {
        let name_len = read_u32(&mut src)? as usize;
        let mut name = vec![0u8; name_len];
        read_exact(&mut src, &mut name)?;
        let name = String::from_utf8(name).map_err(|_| ArchiveError::BadName)?;

        let mut tags = [0u8; 2];
        read_exact(&mut src, &mut tags)?;
        if tags[0] != DTYPE_F32 {
            return Err(ArchiveError::UnsupportedDtype(tags[0]));
        }
        let ndim = tags[1] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let d = read_u64(&mut src)?;
            dims.push(usize::try_from(d).map_err(|_| ArchiveError::BadDims(name.clone()))?);
        }
        if dims.is_empty() || dims.contains(&0) {
            return Err(ArchiveError::BadDims(name));
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| ArchiveError::BadDims(name.clone()))?;

        // `numel` comes from the header; read in bounded chunks.
        let mut data = Vec::new();
        let mut remaining = numel;
        let mut chunk = vec![0u8; 4 * 4096];
        while remaining > 0 {
            let n = remaining.min(4096);
            read_exact(&mut src, &mut chunk[..n * 4])?;
            data.extend(
                chunk[..n * 4]
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            );
            remaining -= n;
        }
        archive.push(TensorEntry { name, dims, data })?;
    }
    Ok(archive)
}

pub fn load(path: impl AsRef<std::path::Path>) -> Result<TensorArchive, ArchiveError> {
    let file = std::fs::File::open(path)?;
    read_archive(io::BufReader::new(file))
}

pub fn save(archive: &TensorArchive, path: impl AsRef<std::path::Path>) -> Result<u64, ArchiveError> {
    let file = std::fs::File::create(path)?;
    let mut w = io::BufWriter::new(file);
    let n = write_archive(archive, &mut w)?;
    w.flush()?;
    Ok(n)
}
