use std::fmt;
use std::io::Read;

use base64::engine::general_purpose::STANDARD as B64;
use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::hash::{hash_bytes, hash_content, hash_parts, ContentHash, HashAlgorithm};
use super::{EvidenceError, EvidenceId};
use crate::codec::{CanonicalReader, CanonicalWriter, DecodeError};
use crate::time::Timestamp;

const MANIFEST_DOMAIN: &str = "tamperproof.manifest.v1";
const DEVICE_KEY_DOMAIN: &[u8] = b"tamperproof.device-key.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Video,
    Photo,
    Audio,
}

impl MediaKind {
    const fn tag(self) -> u8 {
        match self {
            MediaKind::Video => 1,
            MediaKind::Photo => 2,
            MediaKind::Audio => 3,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(MediaKind::Video),
            2 => Some(MediaKind::Photo),
            3 => Some(MediaKind::Audio),
            _ => None,
        }
    }
}

impl std::str::FromStr for MediaKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "video" => Ok(MediaKind::Video),
            "photo" => Ok(MediaKind::Photo),
            "audio" => Ok(MediaKind::Audio),
            other => Err(format!("unknown media kind {other:?} (expected video, photo or audio)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Everything the capturing device knows about a recording besides its bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureMetadata {
    pub evidence_id: EvidenceId,
    pub captured_at: Timestamp,
    pub location: Option<GeoPoint>,
    pub device_id: String,
    pub media_kind: MediaKind,
}

/// Ed25519 signing key held by one capture device.
#[derive(Clone)]
pub struct DeviceKey(SigningKey);

impl DeviceKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self(SigningKey::generate(rng))
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self(SigningKey::from_bytes(&seed))
    }

    /// Deterministic per-device key, so repeated runs sign identically.
    pub fn derive(master_seed: &[u8], device_id: &str) -> Self {
        let seed = hash_parts(&[DEVICE_KEY_DOMAIN, master_seed, device_id.as_bytes()]);
        Self::from_seed(seed.digest)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EvidenceError> {
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| EvidenceError::InvalidKey(format!("expected 32 key bytes, got {}", bytes.len())))?;
        Ok(Self::from_seed(seed))
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn public_key_bytes(&self) -> [u8; 32] {
        self.0.verifying_key().to_bytes()
    }
}

impl fmt::Debug for DeviceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DeviceKey(pub={})", hex::encode(self.public_key_bytes()))
    }
}

/// Signed capture metadata for one evidence file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub evidence_id: EvidenceId,
    pub content_hash: ContentHash,
    pub captured_at: Timestamp,
    pub location: Option<GeoPoint>,
    pub device_id: String,
    pub media_kind: MediaKind,
    #[serde(with = "b64")]
    pub signature: Vec<u8>,
    #[serde(with = "b64")]
    pub signer_public_key: Vec<u8>,
}

impl Manifest {
    /// Canonical bytes of every field that precedes the signature; this is
    /// exactly what the device signs.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut w = CanonicalWriter::with_domain(MANIFEST_DOMAIN);
        write_signed_fields(
            &mut w,
            &self.evidence_id,
            &self.content_hash,
            self.captured_at,
            self.location.as_ref(),
            &self.device_id,
            self.media_kind,
        );
        w.finish()
    }

    /// Full canonical form: signed fields, then signature and public key.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = CanonicalWriter::new();
        w.raw(&self.signing_bytes())
            .bytes(&self.signature)
            .bytes(&self.signer_public_key);
        w.finish()
    }

    /// Digest of [`Manifest::canonical_bytes`]; what gets anchored publicly.
    pub fn manifest_hash(&self) -> ContentHash {
        hash_bytes(&self.canonical_bytes())
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = CanonicalReader::new(bytes);
        r.expect_domain(MANIFEST_DOMAIN)?;
        let evidence_id = EvidenceId::new(r.str()?).map_err(|e| DecodeError::Invalid(e.to_string()))?;
        let algorithm = HashAlgorithm::from_tag(r.u8()?)
            .ok_or_else(|| DecodeError::Invalid("unknown hash algorithm".into()))?;
        let digest = r
            .bytes()?
            .try_into()
            .map_err(|_| DecodeError::Invalid("digest must be 32 bytes".into()))?;
        let captured_at = Timestamp::from_millis(r.i64()?);
        let location = match r.bytes()? {
            [] => None,
            raw if raw.len() == 16 => Some(GeoPoint {
                lat: f64::from_bits(u64::from_be_bytes(raw[..8].try_into().unwrap())),
                lon: f64::from_bits(u64::from_be_bytes(raw[8..].try_into().unwrap())),
            }),
            _ => return Err(DecodeError::Invalid("location must be 0 or 16 bytes".into())),
        };
        let device_id = r.str()?.to_owned();
        let media_kind =
            MediaKind::from_tag(r.u8()?).ok_or_else(|| DecodeError::Invalid("unknown media kind".into()))?;
        let signature = r.bytes()?.to_vec();
        let signer_public_key = r.bytes()?.to_vec();
        if !r.is_empty() {
            return Err(DecodeError::Invalid("trailing bytes after manifest".into()));
        }
        Ok(Manifest {
            evidence_id,
            content_hash: ContentHash { algorithm, digest },
            captured_at,
            location,
            device_id,
            media_kind,
            signature,
            signer_public_key,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

fn write_signed_fields(
    w: &mut CanonicalWriter,
    evidence_id: &EvidenceId,
    content_hash: &ContentHash,
    captured_at: Timestamp,
    location: Option<&GeoPoint>,
    device_id: &str,
    media_kind: MediaKind,
) {
    let loc = location.map(|p| {
        let mut b = [0u8; 16];
        b[..8].copy_from_slice(&p.lat.to_bits().to_be_bytes());
        b[8..].copy_from_slice(&p.lon.to_bits().to_be_bytes());
        b
    });
    w.str(evidence_id.as_str())
        .u8(content_hash.algorithm.tag())
        .bytes(&content_hash.digest)
        .i64(captured_at.as_millis())
        .optional(loc.as_ref().map(|b| &b[..]))
        .str(device_id)
        .u8(media_kind.tag());
}

/// Hashes `media`, then signs the capture metadata together with the digest.
pub fn build_manifest<R: Read>(
    media: R,
    meta: CaptureMetadata,
    signing_key: &DeviceKey,
) -> Result<Manifest, EvidenceError> {
    let content_hash = hash_content(media)?;
    manifest_for_hash(content_hash, meta, signing_key)
}

/// Like [`build_manifest`] when the digest is already known.
pub fn manifest_for_hash(
    content_hash: ContentHash,
    meta: CaptureMetadata,
    signing_key: &DeviceKey,
) -> Result<Manifest, EvidenceError> {
    if meta.device_id.is_empty() {
        return Err(EvidenceError::InvalidMetadata("device_id is empty".into()));
    }
    if let Some(p) = &meta.location {
        if !p.is_valid() {
            return Err(EvidenceError::InvalidMetadata(format!(
                "location out of range: lat={} lon={}",
                p.lat, p.lon
            )));
        }
    }
    let mut manifest = Manifest {
        evidence_id: meta.evidence_id,
        content_hash,
        captured_at: meta.captured_at,
        location: meta.location,
        device_id: meta.device_id,
        media_kind: meta.media_kind,
        signature: Vec::new(),
        signer_public_key: signing_key.public_key_bytes().to_vec(),
    };
    let sig = signing_key.0.sign(&manifest.signing_bytes());
    manifest.signature = sig.to_bytes().to_vec();
    if !verify_manifest(&manifest) {
        return Err(EvidenceError::Signing("fresh signature failed to verify".into()));
    }
    Ok(manifest)
}

/// True iff the signature verifies over the canonical signed fields under
/// `signer_public_key`.
pub fn verify_manifest(manifest: &Manifest) -> bool {
    let Ok(pk_bytes) = <[u8; 32]>::try_from(manifest.signer_public_key.as_slice()) else {
        return false;
    };
    let Ok(pk) = VerifyingKey::from_bytes(&pk_bytes) else {
        return false;
    };
    let Ok(sig) = Signature::from_slice(&manifest.signature) else {
        return false;
    };
    pk.verify_strict(&manifest.signing_bytes(), &sig).is_ok()
}

pub(crate) mod b64 {
    use super::B64;
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        B64.decode(s).map_err(serde::de::Error::custom)
    }
}
