use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CashError {
    #[error("no notes entered")]
    EmptyNotes,
    #[error("{0} is not an accepted note")]
    InvalidDenomination(u64),
    #[error("{0} cannot be paid out in accepted notes")]
    Unrepresentable(Money),
    #[error("cannot read notes {0:?}")]
    Malformed(String),
}

/// Notes counted by the currency detector or dispensed to the customer,
/// in rupees.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteBundle {
    pub notes: Vec<u64>,
}

impl NoteBundle {
    pub fn new(notes: impl Into<Vec<u64>>) -> Self {
        NoteBundle { notes: notes.into() }
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn total(&self) -> Option<Money> {
        let rupees = self
            .notes
            .iter()
            .try_fold(0i64, |acc, &n| acc.checked_add(i64::try_from(n).ok()?))?;
        rupees.checked_mul(100).map(Money::from_minor)
    }
}

/// Wire form: comma-separated rupee values, e.g. `"100,100,50"`.
impl fmt::Display for NoteBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.notes.iter().map(u64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for NoteBundle {
    type Err = CashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().is_empty() {
            return Ok(NoteBundle::default());
        }
        s.split(',')
            .map(|p| p.trim().parse::<u64>().map_err(|_| CashError::Malformed(s.to_string())))
            .collect::<Result<Vec<_>, _>>()
            .map(NoteBundle::new)
    }
}

/// The note values the machine accepts and dispenses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Denominations(BTreeSet<u64>);

impl Default for Denominations {
    fn default() -> Self {
        Denominations([10, 20, 50, 100, 500, 1000, 5000].into_iter().collect())
    }
}

impl Denominations {
    pub fn new(values: impl IntoIterator<Item = u64>) -> Self {
        Denominations(values.into_iter().filter(|&v| v > 0).collect())
    }

    pub fn accepts(&self, note: u64) -> bool {
        self.0.contains(&note)
    }

    pub fn values(&self) -> impl Iterator<Item = u64> + '_ {
        self.0.iter().copied()
    }

    /// Checks a deposited bundle and returns its total.
    pub fn count(&self, bundle: &NoteBundle) -> Result<Money, CashError> {
        if bundle.is_empty() {
            return Err(CashError::EmptyNotes);
        }
        if let Some(&bad) = bundle.notes.iter().find(|&&n| !self.accepts(n)) {
            return Err(CashError::InvalidDenomination(bad));
        }
        bundle.total().ok_or(CashError::Malformed(bundle.to_string()))
    }

    /// Greedy largest-first payout of `amount`.
    pub fn payout(&self, amount: Money) -> Result<NoteBundle, CashError> {
        let minor = amount.minor_units;
        if minor <= 0 || minor % 100 != 0 {
            return Err(CashError::Unrepresentable(amount));
        }
        let mut left = (minor / 100) as u64;
        let mut notes = Vec::new();
        for note in self.0.iter().rev() {
            let n = left / note;
            notes.extend(std::iter::repeat_n(*note, n as usize));
            left -= n * note;
        }
        if left != 0 {
            return Err(CashError::Unrepresentable(amount));
        }
        Ok(NoteBundle { notes })
    }
}
