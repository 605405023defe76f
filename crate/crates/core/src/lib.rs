//! Debit-card payment platform: a conserving account ledger, the terminal
//! wire protocol, transaction workflows, a software smart card, and the RPC
//! server that ties them together.

pub mod cardsim;
pub mod clock;
pub mod demo;
pub mod ids;
pub mod ledger;
pub mod money;
pub mod protocol;
pub mod server;
pub mod store;
pub mod workflows;

pub use clock::{Clock, ManualClock, SystemClock};
pub use ids::{AccountId, CardId, CustomerId};
pub use ledger::{Ledger, LedgerConfig, LedgerError};
pub use money::{Currency, Money};
pub use protocol::{decode, encode, Envelope, Method, ProtocolError};
