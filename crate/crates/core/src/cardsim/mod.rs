//! Software smart card.
//!
//! Cards and the server share a per-card 32-byte key. Authentication is
//! HMAC-SHA-256 challenge-response in both directions; each direction MACs
//! a one-byte tag followed by the 16-byte nonce so a response can never be
//! reflected back as the other side's answer.
//!
//! The card also keeps a replica of its account balance and a queue of
//! offline deltas, reconciled against the (authoritative) ledger at sync.

mod auth;
mod card;
mod sync;

use std::fmt;

use thiserror::Error;

use crate::ids::CardId;
use crate::ledger::LedgerError;

pub use auth::{mutual_authenticate, AuthAnswer, Authenticator, ServerChannel};
pub use card::{CardFile, KeyFile, OfflineDelta, VirtualCard};
pub use sync::{reconcile, sync_card, RejectedDelta, SyncReport};

/// Direction tag for a card answering a server challenge.
pub const TAG_CARD_TO_SERVER: u8 = 0x01;
/// Direction tag for the server answering a card challenge.
pub const TAG_SERVER_TO_CARD: u8 = 0x02;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Nonce(pub [u8; 16]);

impl Nonce {
    pub fn random() -> Self {
        Nonce(rand::random())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Option<Self> {
        Some(Nonce(hex::decode(text.trim()).ok()?.try_into().ok()?))
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonce({})", self.to_hex())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Mac(pub [u8; 32]);

impl Mac {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Option<Self> {
        Some(Mac(hex::decode(text.trim()).ok()?.try_into().ok()?))
    }

    /// Constant-time equality.
    pub fn verify(&self, other: &Mac) -> bool {
        use subtle::ConstantTimeEq;
        self.0.ct_eq(&other.0).into()
    }
}

impl fmt::Debug for Mac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mac({})", self.to_hex())
    }
}

/// HMAC-SHA-256 over `tag || data` (no tag when `None`).
pub fn hmac_sha256(key: &[u8; 32], tag: Option<u8>, data: &[u8]) -> Mac {
    use hmac::{Hmac, Mac as _};
    let mut mac = Hmac::<sha2::Sha256>::new_from_slice(key).expect("any key length is valid");
    if let Some(tag) = tag {
        mac.update(&[tag]);
    }
    mac.update(data);
    Mac(mac.finalize().into_bytes().into())
}

#[derive(Debug, Error)]
pub enum CardError {
    #[error("card is blocked")]
    CardBlocked,
    #[error("unknown card {0}")]
    UnknownCard(CardId),
    #[error("card has no secret key loaded")]
    MissingKey,
    #[error("nonce was never issued for this card")]
    UnknownNonce,
    #[error("nonce already used")]
    NonceReplayed,
    #[error("nonce expired")]
    NonceExpired,
    #[error("session is not card-authenticated")]
    NotAuthenticated,
    #[error("offline amount must be nonzero")]
    ZeroDelta,
    #[error("card replica balance would go negative")]
    InsufficientReplica,
    #[error("server channel: {0}")]
    Channel(String),
    #[error("card file: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Authentication state of one inserted card.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CardSession {
    pub card_id: CardId,
    pub card_authenticated: bool,
    pub server_authenticated: bool,
    pub pin_verified: bool,
    pub created_at: chrono::DateTime<chrono::Utc>,
    pub nonce_seen: std::collections::HashSet<Nonce>,
}

impl CardSession {
    pub fn new(card_id: CardId, created_at: chrono::DateTime<chrono::Utc>) -> Self {
        CardSession {
            card_id,
            card_authenticated: false,
            server_authenticated: false,
            pin_verified: false,
            created_at,
            nonce_seen: Default::default(),
        }
    }

    /// Records `nonce`; false if it was already seen in this session.
    pub fn accept_nonce(&mut self, nonce: Nonce) -> bool {
        self.nonce_seen.insert(nonce)
    }

    /// Card and PIN factors both present.
    pub fn is_transaction_capable(&self) -> bool {
        self.card_authenticated && self.pin_verified
    }
}
