use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::journal::read_entries;
use super::{state_hash, ReplayError, StateHash};
use crate::ids::AccountId;
use crate::ledger::{TransactionRecord, TxKind};

/// Balances rebuilt from a journal, independent of wall clock.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BalanceState {
    pub balances: BTreeMap<AccountId, i64>,
    pub last_tx: u64,
    /// Transaction ids that a Cancel has reversed.
    pub reversed: BTreeSet<u64>,
}

impl BalanceState {
    pub fn hash(&self) -> StateHash {
        state_hash(self.balances.iter().map(|(k, v)| (k, *v)), self.last_tx)
    }

    pub fn balance(&self, account: &AccountId) -> i64 {
        self.balances.get(account).copied().unwrap_or(0)
    }

    pub fn total(&self) -> i128 {
        self.balances.values().map(|v| *v as i128).sum()
    }

    /// Applies one record after validating its position and linkage.
    pub(crate) fn apply(
        &mut self,
        record: &TransactionRecord,
        lookup: &dyn Fn(u64) -> Option<TransactionRecord>,
    ) -> Result<(), ReplayError> {
        let line_no = record.tx_id;
        let ordering = |reason: String| ReplayError::Ordering { line_no, reason };
        if record.tx_id != self.last_tx + 1 {
            return Err(ordering(format!(
                "expected txId {}, found {}",
                self.last_tx + 1,
                record.tx_id
            )));
        }
        if !record.amount.is_positive() {
            return Err(ordering("non-positive amount".into()));
        }
        if record.from_account == record.to_account {
            return Err(ordering("transfer to self".into()));
        }
        match (record.kind, record.reversal_of) {
            (TxKind::Cancel, Some(target)) => {
                let original = lookup(target)
                    .filter(|_| target < record.tx_id)
                    .ok_or_else(|| ordering(format!("cancel of unknown txId {target}")))?;
                if original.kind == TxKind::Cancel {
                    return Err(ordering(format!("cancel of cancel {target}")));
                }
                if self.reversed.contains(&target) {
                    return Err(ordering(format!("txId {target} already reversed")));
                }
                if original.from_account != record.to_account
                    || original.to_account != record.from_account
                    || original.amount != record.amount
                {
                    return Err(ordering(format!("cancel does not mirror txId {target}")));
                }
                self.reversed.insert(target);
            }
            (TxKind::Cancel, None) => return Err(ordering("cancel without reversalOf".into())),
            (_, Some(_)) => return Err(ordering("reversalOf on a non-cancel record".into())),
            (_, None) => {}
        }
        let amount = record.amount.minor_units;
        let from = self.balances.entry(record.from_account.clone()).or_insert(0);
        *from = from.checked_sub(amount).ok_or_else(|| ordering("balance overflow".into()))?;
        let to = self.balances.entry(record.to_account.clone()).or_insert(0);
        *to = to.checked_add(amount).ok_or_else(|| ordering("balance overflow".into()))?;
        self.last_tx = record.tx_id;
        Ok(())
    }
}

/// Rebuilds state from in-memory records.
pub fn replay_records(records: &[TransactionRecord]) -> Result<BalanceState, ReplayError> {
    let mut state = BalanceState::default();
    for record in records {
        state.apply(record, &|id| {
            records.get(id.checked_sub(1)? as usize).cloned()
        })?;
    }
    Ok(state)
}

pub(crate) fn check_order(records: &[TransactionRecord]) -> Result<(), ReplayError> {
    replay_records(records).map(|_| ())
}

/// Rebuilds state from the journal at `path`.
pub fn replay(path: impl AsRef<Path>) -> Result<BalanceState, ReplayError> {
    replay_prefix(path, u64::MAX)
}

/// Rebuilds state from the first `k` lines of the journal.
pub fn replay_prefix(path: impl AsRef<Path>, k: u64) -> Result<BalanceState, ReplayError> {
    let (entries, torn) = read_entries(path.as_ref())?;
    if torn.is_some() {
        tracing::warn!(path = %path.as_ref().display(), "ignoring torn journal tail");
    }
    let records: Vec<_> = entries
        .into_iter()
        .take(k.min(usize::MAX as u64) as usize)
        .map(|e| e.record)
        .collect();
    replay_records(&records)
}
