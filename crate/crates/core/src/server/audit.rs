use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::CustomerId;

/// One /rpc exchange. `request` is the redacted canonical envelope, or
/// absent when the body could not be decoded (raw bodies are never logged,
/// they may hold a PIN).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub customer: Option<CustomerId>,
    pub request: Option<String>,
    pub status: u16,
    pub response: String,
}

enum Sink {
    File { file: File, path: PathBuf },
    Memory(Vec<AuditEntry>),
}

/// Append-only JSON Lines audit trail.
pub struct AuditLog {
    inner: Mutex<(u64, Sink)>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        AuditLog {
            inner: Mutex::new((0, Sink::Memory(Vec::new()))),
        }
    }

    /// Opens `path` for appending; sequence numbers continue from the
    /// existing line count.
    pub fn open(path: &Path) -> io::Result<Self> {
        let existing = match File::open(path) {
            Ok(f) => BufReader::new(f).lines().count() as u64,
            Err(e) if e.kind() == io::ErrorKind::NotFound => 0,
            Err(e) => return Err(e),
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            inner: Mutex::new((
                existing,
                Sink::File {
                    file,
                    path: path.to_owned(),
                },
            )),
        })
    }

    pub fn record(
        &self,
        at: DateTime<Utc>,
        customer: Option<CustomerId>,
        request: Option<String>,
        status: u16,
        response: String,
    ) -> io::Result<u64> {
        let mut guard = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let (count, sink) = &mut *guard;
        let entry = AuditEntry {
            seq: *count + 1,
            at,
            customer,
            request,
            status,
            response,
        };
        match sink {
            Sink::File { file, .. } => {
                let mut line = serde_json::to_string(&entry).map_err(io::Error::other)?;
                line.push('\n');
                file.write_all(line.as_bytes())?;
                file.flush()?;
            }
            Sink::Memory(entries) => entries.push(entry),
        }
        *count += 1;
        Ok(*count)
    }

    pub fn len(&self) -> u64 {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> io::Result<Vec<AuditEntry>> {
        let guard = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        match &guard.1 {
            Sink::Memory(entries) => Ok(entries.clone()),
            Sink::File { path, .. } => BufReader::new(File::open(path)?)
                .lines()
                .map(|line| serde_json::from_str(&line?).map_err(io::Error::other))
                .collect(),
        }
    }
}
