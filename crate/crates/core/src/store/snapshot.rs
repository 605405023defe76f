use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::journal::read_entries;
use super::{BalanceState, ReplayError, StoreError};
use crate::ids::AccountId;

/// Balances as of journal line `line_no`. Replaying the journal suffix after
/// `line_no` on top of a snapshot gives the same state as a full replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Snapshot {
    pub line_no: u64,
    pub balances: BTreeMap<AccountId, i64>,
    pub reversed: BTreeSet<u64>,
    /// Hex state hash at `line_no`, checked on load.
    pub state_hash: String,
}

impl Snapshot {
    pub fn capture(state: &BalanceState) -> Self {
        Snapshot {
            line_no: state.last_tx,
            balances: state.balances.clone(),
            reversed: state.reversed.clone(),
            state_hash: state.hash().to_hex(),
        }
    }

    pub fn to_state(&self) -> BalanceState {
        BalanceState {
            balances: self.balances.clone(),
            last_tx: self.line_no,
            reversed: self.reversed.clone(),
        }
    }

    /// Writes atomically via a temporary file and rename.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?)?;
        file.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let bytes = fs::read(path)?;
        let snap: Snapshot = serde_json::from_slice(&bytes).map_err(std::io::Error::other)?;
        if snap.to_state().hash().to_hex() != snap.state_hash {
            return Err(StoreError::Replay(ReplayError::Checksum {
                line_no: snap.line_no,
            }));
        }
        Ok(snap)
    }
}

/// Snapshot plus the journal suffix after it.
pub fn replay_with_snapshot(
    snapshot: &Snapshot,
    journal: impl AsRef<Path>,
) -> Result<BalanceState, ReplayError> {
    let (entries, _) = read_entries(journal.as_ref())?;
    if (entries.len() as u64) < snapshot.line_no {
        return Err(ReplayError::Ordering {
            line_no: entries.len() as u64,
            reason: format!("journal ends before snapshot line {}", snapshot.line_no),
        });
    }
    let records: Vec<_> = entries.into_iter().map(|e| e.record).collect();
    let mut state = snapshot.to_state();
    for record in &records[snapshot.line_no as usize..] {
        state.apply(record, &|id| records.get(id.checked_sub(1)? as usize).cloned())?;
    }
    Ok(state)
}
