use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{hmac_sha256, CardError, Mac, Nonce, TAG_CARD_TO_SERVER, TAG_SERVER_TO_CARD};
use crate::ids::{AccountId, CardId};
use crate::ledger::{CardRecord, CardStatus, SecretKey, TxKind};
use crate::money::Money;

/// A balance change made while the card was offline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OfflineDelta {
    pub sequence_no: u64,
    /// Negative spends from the card, positive loads onto it.
    pub amount: Money,
    pub kind: TxKind,
    pub recorded_at: DateTime<Utc>,
}

/// The card as it sits in the reader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualCard {
    pub card_id: CardId,
    pub card_number: String,
    pub account_id: AccountId,
    pub status: CardStatus,
    pub cached_balance: Money,
    /// Highest delta sequence number the server has acknowledged.
    pub watermark: u64,
    pub pending: Vec<OfflineDelta>,
    key: Option<SecretKey>,
}

/// On-disk card layout (the key lives in a separate [`KeyFile`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CardFile {
    pub card_id: CardId,
    pub card_number: String,
    pub account_id: AccountId,
    pub status: CardStatus,
    pub cached_balance_minor: i64,
    pub watermark: u64,
    pub pending_deltas: Vec<OfflineDelta>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KeyFile {
    pub card_id: CardId,
    pub secret_key: String,
}

impl VirtualCard {
    /// Personalizes a card from the server's record, key included.
    pub fn issue(record: &CardRecord) -> Self {
        VirtualCard {
            card_id: record.card_id.clone(),
            card_number: record.card_number.clone(),
            account_id: record.account_id.clone(),
            status: record.status,
            cached_balance: record.cached_balance,
            watermark: 0,
            pending: Vec::new(),
            key: Some(record.secret_key.clone()),
        }
    }

    pub fn with_key(mut self, key: SecretKey) -> Self {
        self.key = Some(key);
        self
    }

    pub fn has_key(&self) -> bool {
        self.key.is_some()
    }

    fn key(&self) -> Result<&SecretKey, CardError> {
        if self.status == CardStatus::Blocked {
            return Err(CardError::CardBlocked);
        }
        self.key.as_ref().ok_or(CardError::MissingKey)
    }

    /// Raw keyed response: `HMAC-SHA-256(key, nonce)`.
    pub fn card_respond(&self, nonce: &Nonce) -> Result<Mac, CardError> {
        Ok(hmac_sha256(&self.key()?.0, None, &nonce.0))
    }

    /// Answer to a server challenge, tagged card→server.
    pub fn answer_challenge(&self, nonce: &Nonce) -> Result<Mac, CardError> {
        Ok(hmac_sha256(&self.key()?.0, Some(TAG_CARD_TO_SERVER), &nonce.0))
    }

    /// Checks the server's answer to the card's own challenge.
    pub fn verify_server(&self, card_nonce: &Nonce, answer: &Mac) -> Result<bool, CardError> {
        let expected = hmac_sha256(&self.key()?.0, Some(TAG_SERVER_TO_CARD), &card_nonce.0);
        Ok(expected.verify(answer))
    }

    /// Queues an offline balance change and applies it to the replica.
    pub fn record_offline(
        &mut self,
        amount: Money,
        kind: TxKind,
        at: DateTime<Utc>,
    ) -> Result<&OfflineDelta, CardError> {
        if self.status == CardStatus::Blocked {
            return Err(CardError::CardBlocked);
        }
        if amount.minor_units == 0 {
            return Err(CardError::ZeroDelta);
        }
        let next = self
            .cached_balance
            .checked_add(amount)
            .filter(|b| b.minor_units >= 0)
            .ok_or(CardError::InsufficientReplica)?;
        let sequence_no = self
            .pending
            .last()
            .map(|d| d.sequence_no)
            .unwrap_or(0)
            .max(self.watermark)
            + 1;
        self.cached_balance = next;
        self.pending.push(OfflineDelta {
            sequence_no,
            amount,
            kind,
            recorded_at: at,
        });
        Ok(self.pending.last().expect("just pushed"))
    }

    pub fn to_file(&self) -> CardFile {
        CardFile {
            card_id: self.card_id.clone(),
            card_number: self.card_number.clone(),
            account_id: self.account_id.clone(),
            status: self.status,
            cached_balance_minor: self.cached_balance.minor_units,
            watermark: self.watermark,
            pending_deltas: self.pending.clone(),
        }
    }

    pub fn from_file(file: CardFile) -> Self {
        VirtualCard {
            card_id: file.card_id,
            card_number: file.card_number,
            account_id: file.account_id,
            status: file.status,
            cached_balance: Money::from_minor(file.cached_balance_minor),
            watermark: file.watermark,
            pending: file.pending_deltas,
            key: None,
        }
    }

    /// Writes the card file and, separately, its key file.
    pub fn save(&self, card_path: &Path, key_path: &Path) -> Result<(), CardError> {
        let json = serde_json::to_vec_pretty(&self.to_file()).map_err(std::io::Error::other)?;
        fs::write(card_path, json)?;
        if let Some(key) = &self.key {
            let keyfile = KeyFile {
                card_id: self.card_id.clone(),
                secret_key: key.to_hex(),
            };
            let json = serde_json::to_vec_pretty(&keyfile).map_err(std::io::Error::other)?;
            fs::write(key_path, json)?;
        }
        Ok(())
    }

    /// Loads a card; the key file is optional (a card without one cannot
    /// authenticate).
    pub fn load(card_path: &Path, key_path: Option<&Path>) -> Result<Self, CardError> {
        let file: CardFile =
            serde_json::from_slice(&fs::read(card_path)?).map_err(std::io::Error::other)?;
        let mut card = VirtualCard::from_file(file);
        if let Some(key_path) = key_path {
            let keyfile: KeyFile =
                serde_json::from_slice(&fs::read(key_path)?).map_err(std::io::Error::other)?;
            if keyfile.card_id != card.card_id {
                return Err(CardError::Io(std::io::Error::other(
                    "key file belongs to a different card",
                )));
            }
            card.key = Some(SecretKey::from_hex(&keyfile.secret_key).ok_or_else(|| {
                CardError::Io(std::io::Error::other("key file holds an invalid key"))
            })?);
        }
        Ok(card)
    }
}
