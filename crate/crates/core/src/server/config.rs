use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::store::SyncPolicy;
use crate::workflows::Denominations;

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{var}={value:?} is not valid")]
    Env { var: &'static str, value: String },
}

/// Server settings, read from a TOML file with env overrides.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub port: u16,
    pub store: PathBuf,
    pub session_ttl_secs: u64,
    pub denominations: Denominations,
    /// Defaults to `audit.jsonl` inside the store.
    pub audit_log: Option<PathBuf>,
    pub pin_attempt_limit: Option<u32>,
    pub fsync: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            port: DEFAULT_PORT,
            store: PathBuf::from("cardpay-store"),
            session_ttl_secs: 15 * 60,
            denominations: Denominations::default(),
            audit_log: None,
            pin_attempt_limit: None,
            fsync: true,
        }
    }
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Config::from_toml(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Applies `PORT` and `STORE_PATH` from `lookup` (normally the process
    /// environment).
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(value) = lookup("PORT") {
            self.port = value
                .trim()
                .parse()
                .map_err(|_| ConfigError::Env { var: "PORT", value })?;
        }
        if let Some(value) = lookup("STORE_PATH") {
            if value.is_empty() {
                return Err(ConfigError::Env {
                    var: "STORE_PATH",
                    value,
                });
            }
            self.store = PathBuf::from(value);
        }
        Ok(())
    }

    pub fn audit_path(&self) -> PathBuf {
        self.audit_log.clone().unwrap_or_else(|| self.store.join("audit.jsonl"))
    }

    pub fn sync_policy(&self) -> SyncPolicy {
        if self.fsync {
            SyncPolicy::Fsync
        } else {
            SyncPolicy::Flush
        }
    }
}
