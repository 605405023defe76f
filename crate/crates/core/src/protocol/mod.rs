//! The terminal/server JSON message family.
//!
//! Encoding is strict and deterministic. Decoding is lenient: it accepts the
//! historical key spellings, missing or trailing commas, typographic quotes
//! and bare (unquoted) values.

mod codec;
mod lenient;
mod sequence;
mod transcript;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Timelike, Utc};
use thiserror::Error;

use crate::ids::AccountId;
use crate::money::Money;

pub use codec::{decode, decode_with_diagnostics, encode, Decoded};
pub use sequence::{validate_sequence, Violation};
pub use transcript::{decode_transcript, encode_transcript};

/// Wire rendering of an unset error.
pub const NULL_ERROR: &str = "null";

/// The three domain error strings that may appear on the wire.
pub mod wire_errors {
    pub const VERIFICATION_UNSUCCESSFUL: &str = "Verification Unsuccessful";
    pub const ACCOUNT_NOT_FOUND: &str = "Account Not Found";
    pub const NOT_ENOUGH_CASH: &str = "Account Has Not Enough Cash";
    /// Prefix of every plumbing error.
    pub const INTERNAL_PREFIX: &str = "Internal: ";

    pub fn internal(detail: &str) -> String {
        format!("{INTERNAL_PREFIX}{detail}")
    }

    /// True for the strings the system is allowed to put in `Error`.
    pub fn is_conformant(error: &str) -> bool {
        matches!(
            error,
            VERIFICATION_UNSUCCESSFUL | ACCOUNT_NOT_FOUND | NOT_ENOUGH_CASH | super::NULL_ERROR
        ) || error.starts_with(INTERNAL_PREFIX)
    }
}

/// Keys whose values never leave the process unredacted in diagnostics.
pub const SENSITIVE_KEYS: &[&str] = &[
    "PIN",
    "Password",
    "Customer Password",
    "Customer PIN",
    "Card Key",
];

const REDACTED: &str = "****";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    EnterAmount,
    EnterPin,
    VerifyPin,
    Transmit,
    CancelTransaction,
    AddCustomer,
    VerifyAccount,
    Login,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::EnterAmount,
        Method::EnterPin,
        Method::VerifyPin,
        Method::Transmit,
        Method::CancelTransaction,
        Method::AddCustomer,
        Method::VerifyAccount,
        Method::Login,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::EnterAmount => "EnterAmount",
            Method::EnterPin => "EnterPIN",
            Method::VerifyPin => "VerifyPIN",
            Method::Transmit => "Transmit",
            Method::CancelTransaction => "CancelTransaction",
            Method::AddCustomer => "AddCustomer",
            Method::VerifyAccount => "VerifyAccount",
            Method::Login => "Login",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "Amount" {
            return Ok(Method::EnterAmount);
        }
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ProtocolError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("message has no method")]
    MissingMethod,
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("amount {0:?} is not numeric")]
    BadAmount(String),
    #[error("syntax error at byte {offset}: {detail}")]
    Syntax { offset: usize, detail: String },
}

/// One protocol message.
#[derive(Clone, PartialEq, Eq)]
pub struct Envelope {
    pub method: Method,
    pub to_account: Option<AccountId>,
    pub from_account: Option<AccountId>,
    pub amount: Option<Money>,
    pub pin: Option<String>,
    pub result: Option<String>,
    pub error: Option<String>,
    pub timestamp: DateTime<Utc>,
    /// The human-readable `"Message"` field.
    pub free_text: Option<String>,
    /// Keys outside the core set, e.g. the add-customer form fields.
    pub extras: BTreeMap<String, String>,
}

impl Envelope {
    /// A bare request; the timestamp is truncated to whole seconds.
    pub fn request(method: Method, timestamp: DateTime<Utc>) -> Self {
        Envelope {
            method,
            to_account: None,
            from_account: None,
            amount: None,
            pin: None,
            result: None,
            error: None,
            timestamp: timestamp.with_nanosecond(0).unwrap_or(timestamp),
            free_text: None,
            extras: BTreeMap::new(),
        }
    }

    /// A response to `self` carrying its accounts and amount.
    pub fn respond(&self, result: impl Into<String>, timestamp: DateTime<Utc>) -> Self {
        let mut resp = Envelope::request(self.method, timestamp);
        resp.to_account = self.to_account.clone();
        resp.from_account = self.from_account.clone();
        resp.amount = self.amount;
        resp.result = Some(result.into());
        resp
    }

    pub fn is_response(&self) -> bool {
        self.result.is_some()
    }

    pub fn with_to(mut self, account: impl Into<AccountId>) -> Self {
        self.to_account = Some(account.into());
        self
    }

    pub fn with_from(mut self, account: impl Into<AccountId>) -> Self {
        self.from_account = Some(account.into());
        self
    }

    pub fn with_amount(mut self, amount: Money) -> Self {
        self.amount = Some(amount);
        self
    }

    pub fn with_pin(mut self, pin: impl Into<String>) -> Self {
        self.pin = Some(pin.into());
        self
    }

    pub fn with_error(mut self, error: impl Into<String>) -> Self {
        self.error = Some(error.into());
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.free_text = Some(text.into());
        self
    }

    pub fn with_extra(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.extras.insert(key.into(), value.into());
        self
    }

    pub fn extra(&self, key: &str) -> Option<&str> {
        self.extras.get(key).map(String::as_str)
    }

    /// Copy with every secret replaced by `****`, for logs and audit trails.
    pub fn redacted(&self) -> Envelope {
        let mut copy = self.clone();
        if copy.pin.is_some() {
            copy.pin = Some(REDACTED.to_string());
        }
        for (key, value) in copy.extras.iter_mut() {
            if SENSITIVE_KEYS.iter().any(|k| k.eq_ignore_ascii_case(key)) {
                *value = REDACTED.to_string();
            }
        }
        copy
    }
}

impl fmt::Debug for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shown = self.redacted();
        f.debug_struct("Envelope")
            .field("method", &shown.method)
            .field("to_account", &shown.to_account)
            .field("from_account", &shown.from_account)
            .field("amount", &shown.amount)
            .field("pin", &shown.pin)
            .field("result", &shown.result)
            .field("error", &shown.error)
            .field("timestamp", &shown.timestamp)
            .field("free_text", &shown.free_text)
            .field("extras", &shown.extras)
            .finish()
    }
}

impl fmt::Display for Envelope {
    /// Canonical wire text with secrets redacted.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&encode(&self.redacted()))
    }
}
