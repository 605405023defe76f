//! Integer minor-unit money.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minor units per rupee.
pub const PAISA_PER_RUPEE: i64 = 100;

/// ISO 4217 style three-letter currency code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Currency([u8; 3]);

impl Currency {
    pub const PKR: Currency = Currency(*b"PKR");

    pub fn as_str(&self) -> &str {
        // constructed only from ASCII uppercase letters
        std::str::from_utf8(&self.0).expect("currency code is ascii")
    }
}

impl Default for Currency {
    fn default() -> Self {
        Currency::PKR
    }
}

impl fmt::Display for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Currency {
    type Err = MoneyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.as_bytes();
        if bytes.len() != 3 || !bytes.iter().all(u8::is_ascii_uppercase) {
            return Err(MoneyError::BadCurrency(s.to_string()));
        }
        Ok(Currency([bytes[0], bytes[1], bytes[2]]))
    }
}

impl Serialize for Currency {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Currency {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoneyError {
    #[error("invalid currency code {0:?}")]
    BadCurrency(String),
    #[error("invalid amount {0:?}")]
    BadAmount(String),
    #[error("amount overflow")]
    Overflow,
}

/// An amount of money in paisa.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Money {
    pub minor_units: i64,
    pub currency: Currency,
}

impl Money {
    pub const fn from_minor(minor_units: i64) -> Self {
        Money {
            minor_units,
            currency: Currency::PKR,
        }
    }

    pub const fn zero() -> Self {
        Money::from_minor(0)
    }

    pub fn from_rupees(rupees: i64) -> Self {
        Money::from_minor(rupees * PAISA_PER_RUPEE)
    }

    pub fn is_positive(&self) -> bool {
        self.minor_units > 0
    }

    pub fn checked_add(self, other: Money) -> Option<Money> {
        self.minor_units
            .checked_add(other.minor_units)
            .map(|m| Money { minor_units: m, ..self })
    }

    pub fn checked_sub(self, other: Money) -> Option<Money> {
        self.minor_units
            .checked_sub(other.minor_units)
            .map(|m| Money { minor_units: m, ..self })
    }

    /// Whole-rupee amount, if there is no paisa remainder.
    pub fn whole_rupees(&self) -> Option<i64> {
        (self.minor_units % PAISA_PER_RUPEE == 0).then_some(self.minor_units / PAISA_PER_RUPEE)
    }

    /// Wire rendering: rupees, with two decimals only when paisa are present.
    /// `Money::from_rupees(100)` renders as `"100"`.
    pub fn to_wire(&self) -> String {
        let sign = if self.minor_units < 0 { "-" } else { "" };
        let abs = self.minor_units.unsigned_abs();
        let rupees = abs / PAISA_PER_RUPEE as u64;
        let paisa = abs % PAISA_PER_RUPEE as u64;
        if paisa == 0 {
            format!("{sign}{rupees}")
        } else {
            format!("{sign}{rupees}.{paisa:02}")
        }
    }

    /// Parses the wire amount forms: `"100"`, `" 100"`, `"Rs. 100"`, `"Rs.100.50"`.
    pub fn parse_wire(text: &str) -> Result<Money, MoneyError> {
        let bad = || MoneyError::BadAmount(text.to_string());
        let mut s = text.trim();
        for prefix in ["Rs.", "Rs", "rs.", "RS."] {
            if let Some(rest) = s.strip_prefix(prefix) {
                s = rest.trim_start();
                break;
            }
        }
        let (negative, s) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if frac.len() > 2 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let rupees: i64 = whole.parse().map_err(|_| MoneyError::Overflow)?;
        let paisa: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().map_err(|_| bad())? * 10,
            _ => frac.parse().map_err(|_| bad())?,
        };
        let minor = rupees
            .checked_mul(PAISA_PER_RUPEE)
            .and_then(|m| m.checked_add(paisa))
            .ok_or(MoneyError::Overflow)?;
        Ok(Money::from_minor(if negative { -minor } else { minor }))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.to_wire(), self.currency)
    }
}
