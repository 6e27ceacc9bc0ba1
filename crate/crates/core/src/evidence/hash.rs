use std::fmt;
use std::io::{self, Read};
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

pub const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashAlgorithm {
    #[default]
    Sha256,
}

impl HashAlgorithm {
    pub const fn tag(self) -> u8 {
        match self {
            HashAlgorithm::Sha256 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(HashAlgorithm::Sha256),
            _ => None,
        }
    }
}

/// Cryptographic identity of a byte sequence.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ContentHash {
    pub algorithm: HashAlgorithm,
    pub digest: [u8; DIGEST_LEN],
}

impl ContentHash {
    pub const fn sha256(digest: [u8; DIGEST_LEN]) -> Self {
        Self {
            algorithm: HashAlgorithm::Sha256,
            digest,
        }
    }

    /// All-zero digest, used as the genesis parent.
    pub const fn zero() -> Self {
        Self::sha256([0; DIGEST_LEN])
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.digest)
    }

    pub fn from_hex(s: &str) -> Result<Self, ParseHashError> {
        let bytes = hex::decode(s).map_err(|_| ParseHashError)?;
        Self::from_slice(&bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, ParseHashError> {
        let digest: [u8; DIGEST_LEN] = bytes.try_into().map_err(|_| ParseHashError)?;
        Ok(Self::sha256(digest))
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.digest
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({})", self.to_hex())
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("expected a 32-byte digest")]
pub struct ParseHashError;

impl FromStr for ContentHash {
    type Err = ParseHashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

#[derive(Serialize, Deserialize)]
struct ContentHashJson {
    algorithm: HashAlgorithm,
    digest: String,
}

// JSON form used by manifests: `{"algorithm":"sha256","digest":"<base64>"}`.
impl Serialize for ContentHash {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ContentHashJson {
            algorithm: self.algorithm,
            digest: B64.encode(self.digest),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = ContentHashJson::deserialize(deserializer)?;
        let bytes = B64.decode(raw.digest).map_err(serde::de::Error::custom)?;
        let digest: [u8; DIGEST_LEN] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("digest must be 32 bytes"))?;
        Ok(ContentHash {
            algorithm: raw.algorithm,
            digest,
        })
    }
}

/// Serde adapter writing a [`ContentHash`] as a bare hex string.
pub mod hex_digest {
    use super::ContentHash;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(h: &ContentHash, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&h.to_hex())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ContentHash, D::Error> {
        let s = String::deserialize(d)?;
        ContentHash::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Streams `reader` through SHA-256. Empty input is allowed.
pub fn hash_content<R: Read>(mut reader: R) -> io::Result<ContentHash> {
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        match reader.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => hasher.update(&buf[..n]),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(ContentHash::sha256(hasher.finalize().into()))
}

pub fn hash_bytes(bytes: &[u8]) -> ContentHash {
    ContentHash::sha256(Sha256::digest(bytes).into())
}

/// Hash of the concatenation of `parts`, without copying them together.
pub fn hash_parts(parts: &[&[u8]]) -> ContentHash {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
    }
    ContentHash::sha256(hasher.finalize().into())
}
