//! Append-only JSONL event log with a running SHA-256.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical::{canonical_serialize, CanonicalError};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log storage failure: {0}")]
    Io(#[from] io::Error),
    #[error("record is not canonically serializable: {0}")]
    Canonical(#[from] CanonicalError),
}

enum Sink {
    File { path: PathBuf, out: BufWriter<File> },
    Memory(Vec<u8>),
}

pub struct EventLog {
    sink: Sink,
    hasher: Sha256,
    lines: u64,
}

impl EventLog {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let out = BufWriter::new(File::create(&path)?);
        Ok(Self { sink: Sink::File { path, out }, hasher: Sha256::new(), lines: 0 })
    }

    pub fn in_memory() -> Self {
        Self { sink: Sink::Memory(Vec::new()), hasher: Sha256::new(), lines: 0 }
    }

    /// Appends one record as a canonical line and returns its offset (the
    /// zero-based line number).
    pub fn append<T: Serialize + ?Sized>(&mut self, record: &T) -> Result<u64, LogError> {
        let mut line = canonical_serialize(record)?;
        line.push(b'\n');
        match &mut self.sink {
            Sink::File { out, .. } => out.write_all(&line)?,
            Sink::Memory(buf) => buf.extend_from_slice(&line),
        }
        self.hasher.update(&line);
        let offset = self.lines;
        self.lines += 1;
        Ok(offset)
    }

    pub fn len(&self) -> u64 {
        self.lines
    }

    pub fn is_empty(&self) -> bool {
        self.lines == 0
    }

    /// Hex digest over every line appended so far.
    pub fn digest(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.sink {
            Sink::File { path, .. } => Some(path),
            Sink::Memory(_) => None,
        }
    }

    /// Contents of an in-memory log.
    pub fn bytes(&self) -> Option<&[u8]> {
        match &self.sink {
            Sink::Memory(buf) => Some(buf),
            Sink::File { .. } => None,
        }
    }

    /// Flushes and, for file logs, writes the `<log>.sha256` side-car.
    pub fn seal(&mut self) -> Result<String, LogError> {
        let digest = self.digest();
        if let Sink::File { path, out } = &mut self.sink {
            out.flush()?;
            std::fs::write(sidecar_path(path), format!("{digest}\n"))?;
        }
        Ok(digest)
    }
}

pub fn sidecar_path(log: &Path) -> PathBuf {
    let mut name = log.as_os_str().to_owned();
    name.push(".sha256");
    PathBuf::from(name)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
