//! Append-only transaction journal, snapshots and deterministic replay.
//!
//! Journal lines are bit-exact:
//!
//! ```text
//! {"txId":1,"kind":"Seed","from":"GENESIS","to":"User","amountMinor":12000,"currency":"PKR","timestamp":"2012-05-13T11:00:00Z","reversalOf":null,"crc32":"8f1c6a3e"}
//! ```
//!
//! `crc32` is the CRC-32 of the line with the `crc32` member removed, i.e.
//! of the canonical record object. Line numbers are dense from 1 and equal
//! the record's `txId`.

mod fault;
mod hash;
mod journal;
mod replay;
mod snapshot;

use std::io;

use thiserror::Error;

pub use fault::{FaultInjector, FaultPoint};
pub use hash::{state_hash, StateHash, EMPTY_STATE_HASH};
pub use journal::{decode_line, encode_line, Journal, JournalEntry, SyncPolicy};
pub use replay::{replay, replay_prefix, replay_records, BalanceState};
pub use snapshot::{replay_with_snapshot, Snapshot};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("simulated crash at {0:?}")]
    Crashed(FaultPoint),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line_no}: checksum mismatch")]
    Checksum { line_no: u64 },
    #[error("line {line_no}: malformed entry: {reason}")]
    Malformed { line_no: u64, reason: String },
    #[error("line {line_no}: ordering violation: {reason}")]
    Ordering { line_no: u64, reason: String },
}

impl ReplayError {
    pub fn line_no(&self) -> Option<u64> {
        match self {
            ReplayError::Io(_) => None,
            ReplayError::Checksum { line_no }
            | ReplayError::Malformed { line_no, .. }
            | ReplayError::Ordering { line_no, .. } => Some(*line_no),
        }
    }
}
