//! Identifier newtypes shared across modules.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                $name(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

string_id!(
    /// Ledger account identifier, e.g. `Merchant` or `GENESIS`.
    AccountId
);
string_id!(CustomerId);
string_id!(CardId);

impl AccountId {
    /// Funds every initial customer balance.
    pub fn genesis() -> Self {
        AccountId::new("GENESIS")
    }

    /// Physical cash crossing the terminal boundary (the currency detector).
    pub fn cash() -> Self {
        AccountId::new("CASH")
    }

    pub fn is_system(&self) -> bool {
        self.0 == "GENESIS" || self.0 == "CASH"
    }
}
