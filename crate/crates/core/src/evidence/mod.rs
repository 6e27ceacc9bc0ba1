//! Evidence capture: content hashing, signed capture manifests and a
//! content-addressed object store.

mod hash;
pub(crate) mod manifest;
mod store;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hash::{hash_bytes, hash_content, hash_parts, hex_digest, ContentHash, HashAlgorithm, ParseHashError, DIGEST_LEN};
pub use manifest::{
    build_manifest, manifest_for_hash, verify_manifest, CaptureMetadata, DeviceKey, GeoPoint, Manifest, MediaKind,
};
pub use store::{storage_locator, EvidenceRecord, ObjectStore};

/// Identifier of one captured evidence item. Restricted to
/// `[A-Za-z0-9._-]{1,128}` so it is safe as a file name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EvidenceId(String);

impl EvidenceId {
    pub fn new(id: impl Into<String>) -> Result<Self, EvidenceError> {
        let id = id.into();
        let valid = !id.is_empty()
            && id.len() <= 128
            && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
            && id != "."
            && id != "..";
        if valid {
            Ok(Self(id))
        } else {
            Err(EvidenceError::InvalidId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EvidenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for EvidenceId {
    type Error = EvidenceError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<EvidenceId> for String {
    fn from(id: EvidenceId) -> Self {
        id.0
    }
}

impl std::str::FromStr for EvidenceId {
    type Err = EvidenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
    #[error("media hashes to {actual} but manifest claims {expected}")]
    Integrity { expected: ContentHash, actual: ContentHash },
    #[error("evidence {0} not found")]
    NotFound(EvidenceId),
    #[error("stored object {0} is missing")]
    MissingObject(String),
    #[error("evidence {evidence_id} was tampered with in storage: expected {expected}, found {actual}")]
    Tampered {
        evidence_id: EvidenceId,
        expected: ContentHash,
        actual: ContentHash,
    },
    #[error("evidence {0} already stored with a different manifest")]
    Conflict(EvidenceId),
    #[error("invalid evidence id {0:?}")]
    InvalidId(String),
    #[error("invalid signing key: {0}")]
    InvalidKey(String),
    #[error("invalid capture metadata: {0}")]
    InvalidMetadata(String),
    #[error("signing failed: {0}")]
    Signing(String),
    #[error("corrupt record: {0}")]
    Json(#[from] serde_json::Error),
}
