//! The dual ledger: a public hash-linked anchor chain with Merkle inclusion
//! proofs, a private metadata ledger, and cross-verification between them.

mod chain;
pub(crate) mod journal;
pub mod merkle;
mod private;

use std::io::Read;
use std::path::Path;

use parking_lot::{RwLock, RwLockReadGuard, RwLockWriteGuard};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chain::{AnchorChain, AnchorLocation, AnchorRecord, Block, BlockHeader, PendingReceipt};
pub use merkle::{MerkleProof, ProofStep, Side};
pub use private::{Annotation, PrivateDocument, PrivateLedger, PrivateRecord};

use crate::evidence::{hash_bytes, hash_content, ContentHash, EvidenceId};
use crate::par::Parallelism;
use crate::time::Timestamp;

pub const CHAIN_FILE: &str = "chain.log";
pub const PRIVATE_FILE: &str = "private.log";

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("evidence {evidence_id} already anchored with {anchored}, refusing {submitted}")]
    Conflict {
        evidence_id: EvidenceId,
        anchored: ContentHash,
        submitted: ContentHash,
    },
    #[error("no pending anchors to seal")]
    NothingToSeal,
    #[error("not found: {0}")]
    NotFound(String),
    #[error("immutable: {0}")]
    Immutable(String),
    #[error("ledger file corrupt: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Verified,
    MediaTampered,
    LedgerMismatch,
    MissingAnchor,
    MissingPrivateRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub evidence_id: EvidenceId,
    pub verdict: Verdict,
    pub details: String,
}

impl VerificationReport {
    pub fn is_verified(&self) -> bool {
        self.verdict == Verdict::Verified
    }
}

/// Public chain and private ledger behind independent reader-writer locks.
#[derive(Debug, Default)]
pub struct DualLedger {
    chain: RwLock<AnchorChain>,
    private: RwLock<PrivateLedger>,
}

impl DualLedger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn new(chain: AnchorChain, private: PrivateLedger) -> Self {
        Self {
            chain: RwLock::new(chain),
            private: RwLock::new(private),
        }
    }

    /// Opens `chain.log` and `private.log` inside `dir`.
    pub fn open_dir(dir: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let dir = dir.as_ref();
        Ok(Self::new(
            AnchorChain::open(dir.join(CHAIN_FILE))?,
            PrivateLedger::open(dir.join(PRIVATE_FILE))?,
        ))
    }

    pub fn detached_clone(&self) -> Self {
        Self::new(self.chain.read().detached_clone(), self.private.read().detached_clone())
    }

    pub fn chain(&self) -> RwLockReadGuard<'_, AnchorChain> {
        self.chain.read()
    }

    pub fn chain_mut(&self) -> RwLockWriteGuard<'_, AnchorChain> {
        self.chain.write()
    }

    pub fn private(&self) -> RwLockReadGuard<'_, PrivateLedger> {
        self.private.read()
    }

    pub fn private_mut(&self) -> RwLockWriteGuard<'_, PrivateLedger> {
        self.private.write()
    }

    /// Checks `media` against both ledgers. The first failing check decides:
    /// public anchor, private record, manifest digest agreement, media digest.
    pub fn cross_verify<R: Read>(&self, evidence_id: &EvidenceId, media: R) -> Result<VerificationReport, LedgerError> {
        let expected = match self.expected_digests(evidence_id) {
            Ok(anchor) => anchor,
            Err(report) => return Ok(report),
        };
        let actual = hash_content(media)?;
        Ok(media_verdict(evidence_id, expected, actual))
    }

    pub fn cross_verify_bytes(&self, evidence_id: &EvidenceId, media: &[u8]) -> VerificationReport {
        match self.expected_digests(evidence_id) {
            Ok(expected) => media_verdict(evidence_id, expected, hash_bytes(media)),
            Err(report) => report,
        }
    }

    /// Verifies many items, fanned out according to `parallelism`.
    pub fn cross_verify_batch(&self, parallelism: Parallelism, items: &[(EvidenceId, &[u8])]) -> Vec<VerificationReport> {
        parallelism.map(items, |(id, media)| self.cross_verify_bytes(id, media))
    }

    // Ledger-side checks only; on success returns the anchored media digest.
    fn expected_digests(&self, evidence_id: &EvidenceId) -> Result<ContentHash, VerificationReport> {
        let report = |verdict, details: String| VerificationReport {
            evidence_id: evidence_id.clone(),
            verdict,
            details,
        };
        let anchored = {
            let chain = self.chain.read();
            match chain.anchor(evidence_id) {
                Some((a, _)) => a.clone(),
                None => {
                    return Err(report(
                        Verdict::MissingAnchor,
                        format!("no public anchor for {evidence_id}"),
                    ))
                }
            }
        };
        let private_hash = match self.private.read().private_get(evidence_id) {
            Ok(rec) => rec.manifest.manifest_hash(),
            Err(_) => {
                return Err(report(
                    Verdict::MissingPrivateRecord,
                    format!("{evidence_id} is anchored but has no private record"),
                ))
            }
        };
        if private_hash != anchored.manifest_hash {
            return Err(report(
                Verdict::LedgerMismatch,
                format!(
                    "private manifest hashes to {private_hash}, public anchor holds {}",
                    anchored.manifest_hash
                ),
            ));
        }
        Ok(anchored.content_hash)
    }

    /// Writes `doc` privately and anchors the digest of its JSON body
    /// publicly under `doc_id`.
    pub fn record_document(&self, doc: PrivateDocument, submitted_at: Timestamp) -> Result<PendingReceipt, LedgerError> {
        let evidence_id = EvidenceId::new(doc.doc_id.clone())
            .map_err(|e| LedgerError::NotFound(format!("document id not anchorable: {e}")))?;
        let digest = document_digest(&doc);
        self.private.write().put_document(doc)?;
        self.chain.write().append_anchor(AnchorRecord {
            evidence_id,
            content_hash: digest,
            manifest_hash: digest,
            submitted_at,
        })
    }

    /// True iff the private document still matches its public anchor.
    pub fn verify_document(&self, doc_id: &str) -> bool {
        let Ok(id) = EvidenceId::new(doc_id) else {
            return false;
        };
        let private = self.private.read();
        let chain = self.chain.read();
        match (private.document(doc_id), chain.anchor(&id)) {
            (Some(doc), Some((anchor, _))) => document_digest(doc) == anchor.content_hash,
            _ => false,
        }
    }
}

pub fn document_digest(doc: &PrivateDocument) -> ContentHash {
    let bytes = serde_json::to_vec(&(&doc.doc_id, &doc.kind, &doc.body, doc.written_at)).expect("document serializes");
    hash_bytes(&bytes)
}

fn media_verdict(evidence_id: &EvidenceId, expected: ContentHash, actual: ContentHash) -> VerificationReport {
    if actual == expected {
        VerificationReport {
            evidence_id: evidence_id.clone(),
            verdict: Verdict::Verified,
            details: format!("media digest {actual} matches public anchor and private manifest"),
        }
    } else {
        VerificationReport {
            evidence_id: evidence_id.clone(),
            verdict: Verdict::MediaTampered,
            details: format!("media hashes to {actual}, anchored digest is {expected}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::{build_manifest, CaptureMetadata, DeviceKey, MediaKind};

    fn anchored(ledger: &DualLedger, id: &str, media: &[u8]) -> EvidenceId {
        let evidence_id = EvidenceId::new(id).unwrap();
        let meta = CaptureMetadata {
            evidence_id: evidence_id.clone(),
            captured_at: Timestamp::from_millis(1),
            location: None,
            device_id: "car".into(),
            media_kind: MediaKind::Video,
        };
        let manifest = build_manifest(media, meta, &DeviceKey::from_seed([3; 32])).unwrap();
        ledger
            .private_mut()
            .private_put(PrivateRecord {
                evidence_id: evidence_id.clone(),
                manifest: manifest.clone(),
                annotations: vec![],
                written_at: Timestamp::from_millis(2),
            })
            .unwrap();
        ledger
            .chain_mut()
            .append_anchor(AnchorRecord {
                evidence_id: evidence_id.clone(),
                content_hash: manifest.content_hash,
                manifest_hash: manifest.manifest_hash(),
                submitted_at: Timestamp::from_millis(2),
            })
            .unwrap();
        evidence_id
    }

    #[test]
    fn honest_media_verifies() {
        let l = DualLedger::in_memory();
        let id = anchored(&l, "ev", b"footage");
        assert_eq!(l.cross_verify(&id, &b"footage"[..]).unwrap().verdict, Verdict::Verified);
        l.chain_mut().seal_block(Timestamp::from_millis(3)).unwrap();
        assert_eq!(l.cross_verify_bytes(&id, b"footage").verdict, Verdict::Verified);
    }

    #[test]
    fn flipped_bit_is_media_tampered() {
        let l = DualLedger::in_memory();
        let id = anchored(&l, "ev", b"footage");
        let mut bad = b"footage".to_vec();
        bad[3] ^= 0x08;
        assert_eq!(l.cross_verify_bytes(&id, &bad).verdict, Verdict::MediaTampered);
    }

    #[test]
    fn mutated_private_manifest_is_ledger_mismatch() {
        let l = DualLedger::in_memory();
        let id = anchored(&l, "ev", b"footage");
        let mut m = l.private().private_get(&id).unwrap().manifest.clone();
        m.captured_at = m.captured_at.plus_millis(60_000);
        assert!(l.private_mut().overwrite_manifest_unchecked(&id, m));
        // even with untampered media the ledger disagreement wins
        assert_eq!(l.cross_verify_bytes(&id, b"footage").verdict, Verdict::LedgerMismatch);
    }

    #[test]
    fn missing_pieces_are_reported_in_order() {
        let l = DualLedger::in_memory();
        let id = EvidenceId::new("ghost").unwrap();
        assert_eq!(l.cross_verify_bytes(&id, b"").verdict, Verdict::MissingAnchor);
        l.chain_mut()
            .append_anchor(AnchorRecord {
                evidence_id: id.clone(),
                content_hash: hash_bytes(b""),
                manifest_hash: hash_bytes(b"m"),
                submitted_at: Timestamp::EPOCH,
            })
            .unwrap();
        assert_eq!(l.cross_verify_bytes(&id, b"").verdict, Verdict::MissingPrivateRecord);
    }

    #[test]
    fn batch_matches_individual_checks() {
        let l = DualLedger::in_memory();
        let a = anchored(&l, "a", b"one");
        let b = anchored(&l, "b", b"two");
        let items: Vec<(EvidenceId, &[u8])> = vec![(a, b"one"), (b, b"tw0")];
        for mode in [Parallelism::Sequential, Parallelism::Parallel] {
            let verdicts: Vec<_> = l.cross_verify_batch(mode, &items).into_iter().map(|r| r.verdict).collect();
            assert_eq!(verdicts, vec![Verdict::Verified, Verdict::MediaTampered]);
        }
    }

    #[test]
    fn documents_are_anchored_and_checkable() {
        let l = DualLedger::in_memory();
        let doc = PrivateDocument {
            doc_id: "transfer-c1".into(),
            kind: "transfer".into(),
            body: serde_json::json!({"amount": 10}),
            written_at: Timestamp::from_millis(4),
        };
        l.record_document(doc, Timestamp::from_millis(4)).unwrap();
        assert!(l.verify_document("transfer-c1"));
        assert!(!l.verify_document("transfer-c2"));
    }
}
