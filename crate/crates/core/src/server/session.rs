use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};
use dashmap::DashMap;

use crate::cardsim::CardSession;
use crate::ids::{AccountId, CustomerId};
use crate::ledger::CustomerRecord;
use crate::workflows::WorkflowRun;

/// A logged-in operator at a terminal.
#[derive(Debug)]
pub struct OperatorSession {
    pub token: String,
    pub customer_id: CustomerId,
    pub account_id: AccountId,
    pub admin: bool,
    pub card_session: Option<CardSession>,
    /// The transaction being entered, kept after it ends until the next one
    /// starts.
    pub run: Option<WorkflowRun>,
    pub expires_at: DateTime<Utc>,
}

pub type SessionHandle = Arc<Mutex<OperatorSession>>;

/// Live sessions keyed by bearer token.
pub struct SessionStore {
    sessions: DashMap<String, SessionHandle>,
    ttl: Duration,
}

fn new_token() -> String {
    format!("{:032x}", rand::random::<u128>())
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        SessionStore {
            sessions: DashMap::new(),
            ttl,
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn create(&self, customer: &CustomerRecord, now: DateTime<Utc>) -> (String, DateTime<Utc>) {
        let expires_at = now + self.ttl;
        loop {
            let token = new_token();
            if self.sessions.contains_key(&token) {
                continue;
            }
            let session = OperatorSession {
                token: token.clone(),
                customer_id: customer.customer_id.clone(),
                account_id: customer.account_id.clone(),
                admin: customer.admin,
                card_session: None,
                run: None,
                expires_at,
            };
            self.sessions.insert(token.clone(), Arc::new(Mutex::new(session)));
            return (token, expires_at);
        }
    }

    /// The live session for `token`. Unknown and expired tokens look the
    /// same to the caller; expired ones are dropped.
    pub fn get(&self, token: &str, now: DateTime<Utc>) -> Option<SessionHandle> {
        let handle = self.sessions.get(token)?.value().clone();
        let expired = handle.lock().map(|s| s.expires_at <= now).unwrap_or(true);
        if expired {
            self.sessions.remove(token);
            return None;
        }
        Some(handle)
    }

    pub fn remove(&self, token: &str) -> bool {
        self.sessions.remove(token).is_some()
    }

    /// Drops expired sessions; returns how many were removed.
    pub fn sweep(&self, now: DateTime<Utc>) -> usize {
        let before = self.sessions.len();
        self.sessions
            .retain(|_, s| s.lock().map(|s| s.expires_at > now).unwrap_or(false));
        before - self.sessions.len()
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }
}
