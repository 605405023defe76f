//! Salted one-way digests for PINs and passwords.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;

/// `SHA-256(salt || secret)` with a random 16-byte salt.
///
/// Serialized as `"<salt hex>$<digest hex>"`.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretDigest {
    salt: [u8; 16],
    hash: [u8; 32],
}

impl SecretDigest {
    pub fn new(secret: &str) -> Self {
        Self::with_salt(rand::random(), secret)
    }

    pub fn with_salt(salt: [u8; 16], secret: &str) -> Self {
        SecretDigest {
            salt,
            hash: hash(&salt, secret),
        }
    }

    pub fn salt(&self) -> &[u8; 16] {
        &self.salt
    }

    pub fn hash(&self) -> &[u8; 32] {
        &self.hash
    }

    /// Constant-time check of `candidate` against the stored digest.
    pub fn matches(&self, candidate: &str) -> bool {
        hash(&self.salt, candidate).ct_eq(&self.hash).into()
    }
}

fn hash(salt: &[u8; 16], secret: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(secret.as_bytes());
    h.finalize().into()
}

impl fmt::Debug for SecretDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretDigest({}$…)", hex::encode(self.salt))
    }
}

impl Serialize for SecretDigest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}${}", hex::encode(self.salt), hex::encode(self.hash)))
    }
}

impl<'de> Deserialize<'de> for SecretDigest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let text = String::deserialize(d)?;
        let (salt, hash) = text
            .split_once('$')
            .ok_or_else(|| D::Error::custom("digest must be salt$hash"))?;
        let salt: [u8; 16] = hex::decode(salt)
            .map_err(D::Error::custom)?
            .try_into()
            .map_err(|_| D::Error::custom("salt must be 16 bytes"))?;
        let hash: [u8; 32] = hex::decode(hash)
            .map_err(D::Error::custom)?
            .try_into()
            .map_err(|_| D::Error::custom("digest must be 32 bytes"))?;
        Ok(SecretDigest { salt, hash })
    }
}
