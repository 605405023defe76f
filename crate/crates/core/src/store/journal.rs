use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::{FaultInjector, FaultPoint, ReplayError, StoreError};
use crate::ids::AccountId;
use crate::ledger::{TransactionRecord, TxKind};
use crate::money::{Currency, Money};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalEntry {
    pub line_no: u64,
    pub record: TransactionRecord,
    pub checksum: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct WireRecord {
    tx_id: u64,
    kind: TxKind,
    from: String,
    to: String,
    amount_minor: i64,
    currency: Currency,
    timestamp: String,
    reversal_of: Option<u64>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct WireLine {
    tx_id: u64,
    kind: TxKind,
    from: String,
    to: String,
    amount_minor: i64,
    currency: Currency,
    timestamp: String,
    reversal_of: Option<u64>,
    crc32: String,
}

fn canonical(record: &TransactionRecord) -> String {
    let wire = WireRecord {
        tx_id: record.tx_id,
        kind: record.kind,
        from: record.from_account.0.clone(),
        to: record.to_account.0.clone(),
        amount_minor: record.amount.minor_units,
        currency: record.amount.currency,
        timestamp: record.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
        reversal_of: record.reversal_of,
    };
    serde_json::to_string(&wire).expect("record serializes")
}

/// The journal line for `record`, including the trailing newline.
pub fn encode_line(record: &TransactionRecord) -> String {
    let body = canonical(record);
    let crc = crc32fast::hash(body.as_bytes());
    format!("{},\"crc32\":\"{crc:08x}\"}}\n", &body[..body.len() - 1])
}

/// Parses and verifies one line (without its newline).
pub fn decode_line(line: &str, line_no: u64) -> Result<JournalEntry, ReplayError> {
    let malformed = |reason: String| ReplayError::Malformed { line_no, reason };
    let wire: WireLine = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let timestamp = DateTime::parse_from_rfc3339(&wire.timestamp)
        .map_err(|e| malformed(format!("timestamp: {e}")))?
        .with_timezone(&Utc);
    let record = TransactionRecord {
        tx_id: wire.tx_id,
        kind: wire.kind,
        from_account: AccountId(wire.from),
        to_account: AccountId(wire.to),
        amount: Money {
            minor_units: wire.amount_minor,
            currency: wire.currency,
        },
        timestamp,
        reversal_of: wire.reversal_of,
    };
    let expected = crc32fast::hash(canonical(&record).as_bytes());
    let stored = u32::from_str_radix(&wire.crc32, 16).map_err(|_| ReplayError::Checksum { line_no })?;
    // any byte outside the parsed fields must also be canonical
    if stored != expected || encode_line(&record).trim_end_matches('\n') != line {
        return Err(ReplayError::Checksum { line_no });
    }
    Ok(JournalEntry {
        line_no,
        record,
        checksum: stored,
    })
}

/// Reads all complete lines of a journal. A final line without `\n` is a
/// torn write and is reported separately rather than parsed.
pub(crate) fn read_entries(path: &Path) -> Result<(Vec<JournalEntry>, Option<u64>), ReplayError> {
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut entries = Vec::new();
    let mut offset = 0u64;
    let mut buf = String::new();
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| {
            if e.kind() == io::ErrorKind::InvalidData {
                ReplayError::Malformed {
                    line_no: entries.len() as u64 + 1,
                    reason: "invalid utf-8".into(),
                }
            } else {
                ReplayError::Io(e)
            }
        })?;
        if n == 0 {
            return Ok((entries, None));
        }
        if !buf.ends_with('\n') {
            return Ok((entries, Some(offset)));
        }
        let line_no = entries.len() as u64 + 1;
        entries.push(decode_line(&buf[..buf.len() - 1], line_no)?);
        offset += n as u64;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SyncPolicy {
    /// `fsync` after every append.
    #[default]
    Fsync,
    /// Flush to the OS only; survives process death but not power loss.
    Flush,
}

/// Single-writer handle on a journal file.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
    len: u64,
    sync: SyncPolicy,
    faults: FaultInjector,
}

impl Journal {
    /// Opens (creating if needed) and returns the existing records. A torn
    /// final line is truncated away.
    pub fn open(
        path: impl AsRef<Path>,
        sync: SyncPolicy,
        faults: FaultInjector,
    ) -> Result<(Journal, Vec<TransactionRecord>), StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let (entries, torn_at) = read_entries(&path)?;
        if let Some(offset) = torn_at {
            tracing::warn!(path = %path.display(), offset, "truncating torn journal tail");
            file.set_len(offset)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        let records: Vec<_> = entries.into_iter().map(|e| e.record).collect();
        super::replay::check_order(&records)?;
        let journal = Journal {
            path,
            file,
            len: records.len() as u64,
            sync,
            faults,
        };
        Ok((journal, records))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn faults(&self) -> &FaultInjector {
        &self.faults
    }

    /// Appends `record` and makes it durable. Returns its line number.
    pub fn append(&mut self, record: &TransactionRecord) -> Result<u64, StoreError> {
        let line = encode_line(record);
        if self.faults.trip(FaultPoint::PreFlush) {
            let torn = &line.as_bytes()[..line.len() / 2];
            self.file.write_all(torn)?;
            return Err(StoreError::Crashed(FaultPoint::PreFlush));
        }
        if let Err(e) = self.write_durably(line.as_bytes()) {
            // leave no partial line behind for the next append to extend
            let _ = self.file.set_len(self.byte_len_hint());
            return Err(e.into());
        }
        self.len += 1;
        if self.faults.trip(FaultPoint::PostFlush) {
            return Err(StoreError::Crashed(FaultPoint::PostFlush));
        }
        Ok(self.len)
    }

    fn write_durably(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.file.write_all(bytes)?;
        self.file.flush()?;
        if self.sync == SyncPolicy::Fsync {
            self.file.sync_data()?;
        }
        Ok(())
    }

    fn byte_len_hint(&self) -> u64 {
        std::fs::read(&self.path)
            .ok()
            .and_then(|bytes| bytes.iter().rposition(|b| *b == b'\n').map(|p| p as u64 + 1))
            .unwrap_or(0)
    }

    pub fn sync(&mut self) -> io::Result<()> {
        self.file.sync_all()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn record(tx_id: u64) -> TransactionRecord {
        TransactionRecord {
            tx_id,
            kind: TxKind::Seed,
            from_account: AccountId::genesis(),
            to_account: AccountId::new("User"),
            amount: Money::from_rupees(120),
            timestamp: Utc.with_ymd_and_hms(2012, 5, 13, 11, 0, 0).unwrap(),
            reversal_of: None,
        }
    }

    #[test]
    fn line_layout_is_fixed() {
        let line = encode_line(&record(1));
        let body = r#"{"txId":1,"kind":"Seed","from":"GENESIS","to":"User","amountMinor":12000,"currency":"PKR","timestamp":"2012-05-13T11:00:00Z","reversalOf":null}"#;
        let crc = crc32fast::hash(body.as_bytes());
        assert_eq!(
            line,
            format!("{},\"crc32\":\"{crc:08x}\"}}\n", &body[..body.len() - 1])
        );
        let entry = decode_line(line.trim_end(), 1).unwrap();
        assert_eq!(entry.record, record(1));
        assert_eq!(entry.checksum, crc);
    }

    #[test]
    fn any_flipped_byte_is_detected() {
        let line = encode_line(&record(1));
        let line = line.trim_end();
        for i in 0..line.len() {
            let mut bytes = line.as_bytes().to_vec();
            bytes[i] ^= 0x01;
            let Ok(text) = String::from_utf8(bytes) else { continue };
            assert!(decode_line(&text, 1).is_err(), "flip at {i} went unnoticed: {text}");
        }
    }

    #[test]
    fn first_append_is_line_one_and_reopen_sees_it() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        let (mut j, existing) = Journal::open(&path, SyncPolicy::Fsync, FaultInjector::default()).unwrap();
        assert!(existing.is_empty());
        assert_eq!(j.append(&record(1)).unwrap(), 1);
        drop(j);
        let (j, existing) = Journal::open(&path, SyncPolicy::Fsync, FaultInjector::default()).unwrap();
        assert_eq!(existing, vec![record(1)]);
        assert_eq!(j.len(), 1);
    }

    #[test]
    fn torn_tail_is_truncated_on_open() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        let faults = FaultInjector::default();
        let (mut j, _) = Journal::open(&path, SyncPolicy::Flush, faults.clone()).unwrap();
        j.append(&record(1)).unwrap();
        faults.arm(FaultPoint::PreFlush);
        assert!(matches!(j.append(&record(2)), Err(StoreError::Crashed(FaultPoint::PreFlush))));
        drop(j);
        let (mut j, existing) = Journal::open(&path, SyncPolicy::Flush, FaultInjector::default()).unwrap();
        assert_eq!(existing.len(), 1);
        assert_eq!(j.append(&record(2)).unwrap(), 2);
    }
}
