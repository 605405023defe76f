use std::fmt;

use sha2::{Digest, Sha256};

use crate::ids::AccountId;

/// `state_hash` of a ledger with no transactions.
pub const EMPTY_STATE_HASH: &str = "f508dc951148419993390468d04a05db51118cc547caa763aed508875248a5eb";

/// SHA-256 digest of a ledger state.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateHash(pub [u8; 32]);

impl StateHash {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for StateHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for StateHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateHash({})", self.to_hex())
    }
}

/// Hash of the canonical state: the system accounts plus every account with
/// a nonzero balance, sorted by id, then the last transaction id.
///
/// Each account contributes `len(id) as u32 BE || id || balance as i64 BE`;
/// the trailer is `last_tx as u64 BE`. Zero-balance customer accounts are
/// omitted so that states rebuilt from the journal alone compare equal to
/// live ones.
pub fn state_hash<'a, I>(balances: I, last_tx: u64) -> StateHash
where
    I: IntoIterator<Item = (&'a AccountId, i64)>,
{
    let mut rows: Vec<(&str, i64)> = balances
        .into_iter()
        .filter(|(id, bal)| *bal != 0 || id.is_system())
        .map(|(id, bal)| (id.as_str(), bal))
        .collect();
    for system in ["CASH", "GENESIS"] {
        if !rows.iter().any(|(id, _)| *id == system) {
            rows.push((system, 0));
        }
    }
    rows.sort();
    let mut h = Sha256::new();
    for (id, bal) in rows {
        h.update((id.len() as u32).to_be_bytes());
        h.update(id.as_bytes());
        h.update(bal.to_be_bytes());
    }
    h.update(last_tx.to_be_bytes());
    StateHash(h.finalize().into())
}
