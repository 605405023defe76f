//! On-disk registry of customers, accounts and cards, plus the keystore.
//!
//! Both files are rewritten whole, atomically, on every change.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{CardStatus, CustomerRecord};
use crate::ids::{AccountId, CardId, CustomerId};

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const REGISTRY_FILE: &str = "registry.json";
pub const KEYSTORE_FILE: &str = "keystore.json";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub(crate) struct Registry {
    pub customers: Vec<CustomerRecord>,
    pub accounts: Vec<AccountEntry>,
    pub cards: Vec<CardEntry>,
    #[serde(default)]
    pub sync_marks: BTreeMap<CardId, SyncMark>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub(crate) struct AccountEntry {
    pub account_id: AccountId,
    pub owner: CustomerId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub(crate) struct CardEntry {
    pub card_id: CardId,
    pub card_number: String,
    pub account_id: AccountId,
    pub owner_name: String,
    pub status: CardStatus,
    pub cached_balance_minor: i64,
}

/// Offline-delta watermark for one card. `pending` is written before the
/// delta's transfer is journaled so a crash in between can be resolved on
/// reopen by checking whether `tx_id` made it into the journal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SyncMark {
    pub applied: u64,
    pub pending: Option<PendingDelta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PendingDelta {
    pub sequence_no: u64,
    pub tx_id: u64,
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp)?;
    file.write_all(bytes)?;
    file.sync_all()?;
    fs::rename(&tmp, path)
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de> + Default>(path: &Path) -> io::Result<T> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(io::Error::other),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(T::default()),
        Err(e) => Err(e),
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
    write_atomic(path, &bytes)
}
