use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::{AccountId, CardId, CustomerId};
use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxKind {
    #[serde(rename = "POTC")]
    PayOverCounter,
    #[serde(rename = "A2A")]
    AccountToAccount,
    Withdraw,
    Deposit,
    Seed,
    Cancel,
}

impl TxKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TxKind::PayOverCounter => "POTC",
            TxKind::AccountToAccount => "A2A",
            TxKind::Withdraw => "Withdraw",
            TxKind::Deposit => "Deposit",
            TxKind::Seed => "Seed",
            TxKind::Cancel => "Cancel",
        }
    }
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TxKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            TxKind::PayOverCounter,
            TxKind::AccountToAccount,
            TxKind::Withdraw,
            TxKind::Deposit,
            TxKind::Seed,
            TxKind::Cancel,
        ]
        .into_iter()
        .find(|k| k.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown transaction kind {s:?}"))
    }
}

/// One journaled transfer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionRecord {
    pub tx_id: u64,
    pub kind: TxKind,
    pub from_account: AccountId,
    pub to_account: AccountId,
    pub amount: Money,
    pub timestamp: DateTime<Utc>,
    pub reversal_of: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccountKind {
    Customer,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Account {
    pub account_id: AccountId,
    /// `None` for system accounts.
    pub owner: Option<CustomerId>,
    pub balance: Money,
    pub kind: AccountKind,
}

/// The identity fields captured by the add-customer form.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomerProfile {
    /// Requested customer id; generated when absent.
    pub customer_id: Option<String>,
    pub name: String,
    pub phone: String,
    pub office: String,
    pub room: String,
    pub email: String,
    pub department: String,
    /// Requested account id; generated when absent.
    pub account_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomerRecord {
    pub customer_id: CustomerId,
    pub name: String,
    pub phone: String,
    pub office: String,
    pub room: String,
    pub email: String,
    pub department: String,
    pub username: String,
    pub password_digest: super::digest::SecretDigest,
    pub pin_digest: super::digest::SecretDigest,
    pub account_id: AccountId,
    #[serde(default)]
    pub admin: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CardStatus {
    Active,
    Blocked,
}

/// A 32-byte symmetric key shared by a card and the server.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey(pub [u8; 32]);

impl SecretKey {
    pub fn generate() -> Self {
        SecretKey(rand::random())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Option<Self> {
        let bytes = hex::decode(text.trim()).ok()?;
        Some(SecretKey(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(****)")
    }
}

/// Server-side record of a card. `cached_balance` mirrors the card's replica
/// as of the last sync.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CardRecord {
    pub card_id: CardId,
    pub card_number: String,
    pub account_id: AccountId,
    pub owner_name: String,
    pub status: CardStatus,
    pub cached_balance: Money,
    pub secret_key: SecretKey,
}

/// Everything `add_customer` needs.
#[derive(Debug, Clone)]
pub struct NewCustomer {
    pub profile: CustomerProfile,
    pub initial_balance: Money,
    pub username: String,
    pub password: String,
    pub pin: String,
    pub admin: bool,
    /// Requested card id/number; generated when absent.
    pub card_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CustomerHandle {
    pub customer_id: CustomerId,
    pub account_id: AccountId,
    pub card_id: CardId,
}
