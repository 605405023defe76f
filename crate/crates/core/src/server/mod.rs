//! RPC server: login, session handling and method dispatch over HTTP.

pub mod api;
mod audit;
mod config;
mod http;
mod service;
mod session;

pub use audit::{AuditEntry, AuditLog};
pub use config::{Config, ConfigError, DEFAULT_PORT};
pub use http::{router, BoundServer, ServeError};
pub use service::{form, LocalChannel, RpcReply, Service, ServiceError, BUILD_ID, PASSWORD_KEY, TOKEN_KEY, TRANSACTION_KEY, USERNAME_KEY};
pub use session::{OperatorSession, SessionStore};

#[cfg(test)]
mod tests;
