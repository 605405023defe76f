//! JSON bodies of the non-envelope endpoints.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::cardsim::OfflineDelta;
use crate::ids::{CardId, CustomerId};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginRequest {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoginResponse {
    pub token: String,
    pub customer_id: CustomerId,
    pub admin: bool,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChallengeRequest {
    pub card_id: CardId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChallengeResponse {
    pub card_id: CardId,
    /// 16 bytes, hex.
    pub nonce: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuthenticateRequest {
    pub card_id: CardId,
    pub server_nonce: String,
    /// The card's tagged answer to `server_nonce`, hex.
    pub card_mac: String,
    /// The card's own challenge to the server, hex.
    pub card_nonce: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuthenticateResponse {
    pub card_accepted: bool,
    pub server_mac: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SyncRequest {
    pub card_id: CardId,
    #[serde(default)]
    pub deltas: Vec<OfflineDelta>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RejectedDeltaBody {
    pub sequence_no: u64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SyncResponse {
    pub card_id: CardId,
    pub cached_balance_minor: i64,
    pub watermark: u64,
    pub applied_tx_ids: Vec<u64>,
    pub rejected: Vec<RejectedDeltaBody>,
    pub skipped: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Health {
    pub status: String,
    pub build: String,
    pub journal_length: u64,
}

/// Body of every non-200 reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    #[serde(rename = "Error")]
    pub error: String,
}
