use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};

use super::{
    hmac_sha256, CardError, CardSession, Mac, Nonce, VirtualCard, TAG_CARD_TO_SERVER,
    TAG_SERVER_TO_CARD,
};
use crate::clock::Clock;
use crate::ids::CardId;
use crate::ledger::{CardStatus, Ledger, LedgerError};

/// The server's reply to a card's authentication attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthAnswer {
    pub card_accepted: bool,
    /// The server's answer to the card's challenge; withheld when the card
    /// was not accepted.
    pub server_mac: Option<Mac>,
}

/// How a card reaches the server, in-process or over the network.
pub trait ServerChannel {
    fn challenge(&self, card_id: &CardId) -> Result<Nonce, CardError>;

    fn authenticate(
        &self,
        card_id: &CardId,
        server_nonce: &Nonce,
        card_mac: &Mac,
        card_nonce: &Nonce,
    ) -> Result<AuthAnswer, CardError>;
}

#[derive(Debug, Clone, Copy)]
struct Issued {
    at: DateTime<Utc>,
    used: bool,
}

/// Server side of challenge-response: issues nonces, checks card MACs,
/// answers card challenges. Safe to share across sessions.
pub struct Authenticator {
    ledger: Arc<Ledger>,
    clock: Arc<dyn Clock>,
    ttl: Duration,
    issued: Mutex<HashMap<CardId, HashMap<Nonce, Issued>>>,
}

impl Authenticator {
    pub const DEFAULT_TTL_SECS: i64 = 60;
    /// Challenges kept per card; issuing more drops the oldest.
    pub const MAX_OUTSTANDING: usize = 16;

    pub fn new(ledger: Arc<Ledger>, clock: Arc<dyn Clock>) -> Self {
        Self::with_ttl(ledger, clock, Duration::seconds(Self::DEFAULT_TTL_SECS))
    }

    pub fn with_ttl(ledger: Arc<Ledger>, clock: Arc<dyn Clock>, ttl: Duration) -> Self {
        Authenticator {
            ledger,
            clock,
            ttl,
            issued: Mutex::new(HashMap::new()),
        }
    }

    fn active_key(&self, card_id: &CardId) -> Result<[u8; 32], CardError> {
        let card = self.ledger.card(card_id).map_err(|e| match e {
            LedgerError::UnknownCard(id) => CardError::UnknownCard(id),
            other => CardError::Ledger(other),
        })?;
        if card.status != CardStatus::Active {
            return Err(CardError::CardBlocked);
        }
        Ok(card.secret_key.0)
    }

    pub fn issue_challenge(&self, card_id: &CardId) -> Result<Nonce, CardError> {
        self.active_key(card_id)?;
        let now = self.clock.now();
        let nonce = Nonce::random();
        let mut issued = self.issued.lock().unwrap_or_else(|e| e.into_inner());
        let per_card = issued.entry(card_id.clone()).or_default();
        per_card.retain(|_, i| now - i.at <= self.ttl);
        while per_card.len() >= Self::MAX_OUTSTANDING {
            let oldest = *per_card.iter().min_by_key(|(_, i)| i.at).unwrap().0;
            per_card.remove(&oldest);
        }
        per_card.insert(nonce, Issued { at: now, used: false });
        Ok(nonce)
    }

    /// True iff `mac` is the card→server answer to `nonce` under the card's
    /// key. The nonce is consumed whether or not the MAC matches.
    pub fn server_verify_card(&self, card_id: &CardId, nonce: &Nonce, mac: &Mac) -> Result<bool, CardError> {
        let key = self.active_key(card_id)?;
        let now = self.clock.now();
        {
            let mut issued = self.issued.lock().unwrap_or_else(|e| e.into_inner());
            let entry = issued
                .get_mut(card_id)
                .and_then(|m| m.get_mut(nonce))
                .ok_or(CardError::UnknownNonce)?;
            if entry.used {
                return Err(CardError::NonceReplayed);
            }
            entry.used = true;
            if now - entry.at > self.ttl {
                return Err(CardError::NonceExpired);
            }
        }
        Ok(hmac_sha256(&key, Some(TAG_CARD_TO_SERVER), &nonce.0).verify(mac))
    }

    /// The server→card answer to a card-issued nonce.
    pub fn respond_to_card(&self, card_id: &CardId, card_nonce: &Nonce) -> Result<Mac, CardError> {
        let key = self.active_key(card_id)?;
        Ok(hmac_sha256(&key, Some(TAG_SERVER_TO_CARD), &card_nonce.0))
    }
}

impl ServerChannel for Authenticator {
    fn challenge(&self, card_id: &CardId) -> Result<Nonce, CardError> {
        self.issue_challenge(card_id)
    }

    fn authenticate(
        &self,
        card_id: &CardId,
        server_nonce: &Nonce,
        card_mac: &Mac,
        card_nonce: &Nonce,
    ) -> Result<AuthAnswer, CardError> {
        let card_accepted = self.server_verify_card(card_id, server_nonce, card_mac)?;
        let server_mac = if card_accepted {
            Some(self.respond_to_card(card_id, card_nonce)?)
        } else {
            None
        };
        Ok(AuthAnswer {
            card_accepted,
            server_mac,
        })
    }
}

/// Runs both directions of challenge-response. Verification failures show
/// up as false flags on the returned session, not as errors; errors are
/// reserved for blocked cards and transport problems.
pub fn mutual_authenticate(
    card: &VirtualCard,
    channel: &dyn ServerChannel,
    now: DateTime<Utc>,
) -> Result<CardSession, CardError> {
    let mut session = CardSession::new(card.card_id.clone(), now);
    if card.status == CardStatus::Blocked {
        return Err(CardError::CardBlocked);
    }
    let server_nonce = channel.challenge(&card.card_id)?;
    if !session.accept_nonce(server_nonce) {
        return Ok(session);
    }
    let card_mac = card.answer_challenge(&server_nonce)?;
    let card_nonce = Nonce::random();
    let answer = match channel.authenticate(&card.card_id, &server_nonce, &card_mac, &card_nonce) {
        Ok(answer) => answer,
        Err(CardError::NonceReplayed | CardError::NonceExpired | CardError::UnknownNonce) => {
            return Ok(session)
        }
        Err(e) => return Err(e),
    };
    session.card_authenticated = answer.card_accepted;
    session.server_authenticated = match answer.server_mac {
        Some(mac) => card.verify_server(&card_nonce, &mac)?,
        None => false,
    };
    Ok(session)
}
