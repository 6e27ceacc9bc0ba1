//! Single-writer public anchor chain.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::journal::RecordFile;
use super::merkle::{fold_path, inclusion_path, leaf_hash, merkle_root, MerkleProof};
use super::LedgerError;
use crate::codec::{CanonicalReader, CanonicalWriter, DecodeError};
use crate::evidence::{hash_bytes, hex_digest, ContentHash, EvidenceId};
use crate::time::Timestamp;

const ANCHOR_DOMAIN: &str = "tamperproof.anchor.v1";
const HEADER_DOMAIN: &str = "tamperproof.block.v1";
const TAG_ANCHOR: u8 = 1;
const TAG_HEADER: u8 = 2;

/// Public commitment to one evidence item: just the two digests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub evidence_id: EvidenceId,
    #[serde(with = "hex_digest")]
    pub content_hash: ContentHash,
    #[serde(with = "hex_digest")]
    pub manifest_hash: ContentHash,
    pub submitted_at: Timestamp,
}

impl AnchorRecord {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = CanonicalWriter::with_domain(ANCHOR_DOMAIN);
        w.str(self.evidence_id.as_str())
            .u8(self.content_hash.algorithm.tag())
            .bytes(&self.content_hash.digest)
            .u8(self.manifest_hash.algorithm.tag())
            .bytes(&self.manifest_hash.digest)
            .i64(self.submitted_at.as_millis());
        w.finish()
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = CanonicalReader::new(bytes);
        r.expect_domain(ANCHOR_DOMAIN)?;
        let evidence_id = EvidenceId::new(r.str()?).map_err(|e| DecodeError::Invalid(e.to_string()))?;
        let content_hash = read_hash(&mut r)?;
        let manifest_hash = read_hash(&mut r)?;
        let submitted_at = Timestamp::from_millis(r.i64()?);
        Ok(Self {
            evidence_id,
            content_hash,
            manifest_hash,
            submitted_at,
        })
    }

    pub fn leaf(&self) -> ContentHash {
        leaf_hash(&self.canonical_bytes())
    }
}

fn read_hash(r: &mut CanonicalReader<'_>) -> Result<ContentHash, DecodeError> {
    let tag = r.u8()?;
    crate::evidence::HashAlgorithm::from_tag(tag).ok_or_else(|| DecodeError::Invalid("unknown hash algorithm".into()))?;
    ContentHash::from_slice(r.bytes()?).map_err(|e| DecodeError::Invalid(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub height: u64,
    #[serde(with = "hex_digest")]
    pub prev_block_hash: ContentHash,
    #[serde(with = "hex_digest")]
    pub merkle_root: ContentHash,
    pub sealed_at: Timestamp,
    pub anchor_count: u32,
}

impl BlockHeader {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = CanonicalWriter::with_domain(HEADER_DOMAIN);
        w.u64(self.height)
            .bytes(&self.prev_block_hash.digest)
            .bytes(&self.merkle_root.digest)
            .i64(self.sealed_at.as_millis())
            .u32(self.anchor_count);
        w.finish()
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = CanonicalReader::new(bytes);
        r.expect_domain(HEADER_DOMAIN)?;
        let bad = |e: crate::evidence::ParseHashError| DecodeError::Invalid(e.to_string());
        Ok(Self {
            height: r.u64()?,
            prev_block_hash: ContentHash::from_slice(r.bytes()?).map_err(bad)?,
            merkle_root: ContentHash::from_slice(r.bytes()?).map_err(bad)?,
            sealed_at: Timestamp::from_millis(r.i64()?),
            anchor_count: r.u32()?,
        })
    }

    pub fn hash(&self) -> ContentHash {
        hash_bytes(&self.canonical_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub anchors: Vec<AnchorRecord>,
}

impl Block {
    pub fn leaves(&self) -> Vec<ContentHash> {
        self.anchors.iter().map(AnchorRecord::leaf).collect()
    }
}

/// Returned by [`AnchorChain::append_anchor`]; re-submissions get the original.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingReceipt {
    pub evidence_id: EvidenceId,
    #[serde(with = "hex_digest")]
    pub content_hash: ContentHash,
    pub sequence: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorLocation {
    Pending,
    Sealed { height: u64, index: u32 },
}

#[derive(Debug, Clone, Default)]
struct ChainState {
    blocks: Vec<Block>,
    pending: Vec<AnchorRecord>,
    receipts: HashMap<EvidenceId, PendingReceipt>,
    anchors: HashMap<EvidenceId, (AnchorRecord, AnchorLocation)>,
    next_sequence: u64,
}

/// Hash-linked chain of sealed blocks plus the open set of pending anchors.
#[derive(Debug, Default)]
pub struct AnchorChain {
    state: ChainState,
    journal: Option<RecordFile>,
}

impl AnchorChain {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a chain file, replaying and re-verifying every record in it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let (journal, records) = RecordFile::open(path.as_ref())?;
        let mut chain = Self::in_memory();
        for (n, rec) in records.iter().enumerate() {
            let corrupt = |why: String| LedgerError::Corrupt(format!("chain record {n}: {why}"));
            match rec.split_first() {
                Some((&TAG_ANCHOR, body)) => {
                    let anchor = AnchorRecord::from_canonical_bytes(body).map_err(|e| corrupt(e.to_string()))?;
                    chain.append_anchor(anchor)?;
                }
                Some((&TAG_HEADER, body)) => {
                    let stored = BlockHeader::from_canonical_bytes(body).map_err(|e| corrupt(e.to_string()))?;
                    let rebuilt = chain.seal_block(stored.sealed_at)?;
                    if rebuilt != stored {
                        return Err(corrupt(format!(
                            "stored header for height {} does not match its anchors",
                            stored.height
                        )));
                    }
                }
                _ => return Err(corrupt("unknown record tag".into())),
            }
        }
        chain.journal = Some(journal);
        Ok(chain)
    }

    /// Copy of the chain state with no backing file.
    pub fn detached_clone(&self) -> Self {
        Self {
            state: self.state.clone(),
            journal: None,
        }
    }

    pub fn file_path(&self) -> Option<&Path> {
        self.journal.as_ref().map(RecordFile::path)
    }

    /// Queues an anchor into the open block.
    ///
    /// Idempotent on `(evidence_id, content_hash)`; a different digest for a
    /// known evidence id is a conflict.
    pub fn append_anchor(&mut self, record: AnchorRecord) -> Result<PendingReceipt, LedgerError> {
        if let Some(receipt) = self.state.receipts.get(&record.evidence_id) {
            return if receipt.content_hash == record.content_hash {
                Ok(receipt.clone())
            } else {
                Err(LedgerError::Conflict {
                    evidence_id: record.evidence_id,
                    anchored: receipt.content_hash,
                    submitted: record.content_hash,
                })
            };
        }
        if let Some(j) = &mut self.journal {
            let mut payload = vec![TAG_ANCHOR];
            payload.extend_from_slice(&record.canonical_bytes());
            j.append(&payload)?;
        }
        let receipt = PendingReceipt {
            evidence_id: record.evidence_id.clone(),
            content_hash: record.content_hash,
            sequence: self.state.next_sequence,
        };
        self.state.next_sequence += 1;
        self.state.receipts.insert(record.evidence_id.clone(), receipt.clone());
        self.state
            .anchors
            .insert(record.evidence_id.clone(), (record.clone(), AnchorLocation::Pending));
        self.state.pending.push(record);
        Ok(receipt)
    }

    /// Seals every pending anchor into a new block, ordered by
    /// `(submitted_at, evidence_id)`.
    pub fn seal_block(&mut self, sealed_at: Timestamp) -> Result<BlockHeader, LedgerError> {
        if self.state.pending.is_empty() {
            return Err(LedgerError::NothingToSeal);
        }
        let mut anchors = self.state.pending.clone();
        anchors.sort_by(|a, b| {
            (a.submitted_at, &a.evidence_id).cmp(&(b.submitted_at, &b.evidence_id))
        });
        let leaves: Vec<_> = anchors.iter().map(AnchorRecord::leaf).collect();
        let header = BlockHeader {
            height: self.state.blocks.len() as u64,
            prev_block_hash: self.tip().map_or(ContentHash::zero(), |h| h.hash()),
            merkle_root: merkle_root(&leaves).expect("non-empty"),
            sealed_at,
            anchor_count: u32::try_from(anchors.len()).map_err(|_| LedgerError::Corrupt("block too large".into()))?,
        };
        if let Some(j) = &mut self.journal {
            let mut payload = vec![TAG_HEADER];
            payload.extend_from_slice(&header.canonical_bytes());
            j.append(&payload)?;
        }
        for (i, a) in anchors.iter().enumerate() {
            if let Some(entry) = self.state.anchors.get_mut(&a.evidence_id) {
                entry.1 = AnchorLocation::Sealed {
                    height: header.height,
                    index: i as u32,
                };
            }
        }
        self.state.pending.clear();
        self.state.blocks.push(Block { header, anchors });
        Ok(header)
    }

    pub fn prove_inclusion(&self, evidence_id: &EvidenceId) -> Result<MerkleProof, LedgerError> {
        let Some((_, AnchorLocation::Sealed { height, index })) = self.state.anchors.get(evidence_id) else {
            return Err(LedgerError::NotFound(format!("no sealed anchor for {evidence_id}")));
        };
        let block = &self.state.blocks[*height as usize];
        let siblings = inclusion_path(&block.leaves(), *index as usize).expect("index within block");
        Ok(MerkleProof {
            leaf_index: *index,
            siblings,
            block_height: *height,
        })
    }

    /// True iff `leaf` folds through `proof` to `header.merkle_root` and
    /// `header` is the header this chain holds at that height.
    pub fn verify_inclusion(&self, leaf: &AnchorRecord, proof: &MerkleProof, header: &BlockHeader) -> bool {
        proof.block_height == header.height
            && self.header(header.height).as_ref() == Some(header)
            && fold_path(leaf.leaf(), &proof.siblings) == header.merkle_root
    }

    /// Recomputes every merkle root and parent link.
    pub fn verify_chain(&self) -> Result<(), LedgerError> {
        let mut prev = ContentHash::zero();
        for (h, block) in self.state.blocks.iter().enumerate() {
            let header = &block.header;
            if header.height != h as u64 || header.prev_block_hash != prev {
                return Err(LedgerError::Corrupt(format!("broken parent link at height {h}")));
            }
            if merkle_root(&block.leaves()) != Some(header.merkle_root)
                || header.anchor_count as usize != block.anchors.len()
            {
                return Err(LedgerError::Corrupt(format!("merkle root mismatch at height {h}")));
            }
            prev = header.hash();
        }
        Ok(())
    }

    pub fn anchor(&self, evidence_id: &EvidenceId) -> Option<(&AnchorRecord, AnchorLocation)> {
        self.state.anchors.get(evidence_id).map(|(a, loc)| (a, *loc))
    }

    pub fn height(&self) -> u64 {
        self.state.blocks.len() as u64
    }

    pub fn tip(&self) -> Option<&BlockHeader> {
        self.state.blocks.last().map(|b| &b.header)
    }

    pub fn header(&self, height: u64) -> Option<BlockHeader> {
        self.state.blocks.get(usize::try_from(height).ok()?).map(|b| b.header)
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.state.blocks.get(usize::try_from(height).ok()?)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.state.blocks
    }

    pub fn pending(&self) -> &[AnchorRecord] {
        &self.state.pending
    }

    /// Anchors in sealed blocks plus pending ones.
    pub fn anchor_count(&self) -> usize {
        self.state.anchors.len()
    }

    pub fn headers_json(&self) -> String {
        let headers: Vec<_> = self.state.blocks.iter().map(|b| b.header).collect();
        serde_json::to_string_pretty(&headers).expect("headers serialize")
    }

    #[cfg(test)]
    pub(crate) fn block_mut_for_test(&mut self, height: usize) -> &mut Block {
        &mut self.state.blocks[height]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::merkle::{node_hash, Side};

    fn anchor(id: &str, at: i64) -> AnchorRecord {
        AnchorRecord {
            evidence_id: EvidenceId::new(id).unwrap(),
            content_hash: hash_bytes(id.as_bytes()),
            manifest_hash: hash_bytes(format!("m-{id}").as_bytes()),
            submitted_at: Timestamp::from_millis(at),
        }
    }

    fn chain_with(n: usize) -> AnchorChain {
        let mut c = AnchorChain::in_memory();
        for i in 0..n {
            c.append_anchor(anchor(&format!("ev-{i}"), i as i64)).unwrap();
        }
        c
    }

    #[test]
    fn single_anchor_block_root_is_its_leaf() {
        let mut c = chain_with(1);
        let h = c.seal_block(Timestamp::from_millis(100)).unwrap();
        assert_eq!(h.merkle_root, anchor("ev-0", 0).leaf());
        assert_eq!(h.prev_block_hash, ContentHash::zero());
        assert_eq!(h.anchor_count, 1);
    }

    #[test]
    fn four_anchor_root_matches_hand_built_tree() {
        let mut c = chain_with(4);
        let h = c.seal_block(Timestamp::from_millis(100)).unwrap();
        let l: Vec<_> = (0..4).map(|i| anchor(&format!("ev-{i}"), i).leaf()).collect();
        let by_hand = node_hash(&node_hash(&l[0], &l[1]), &node_hash(&l[2], &l[3]));
        assert_eq!(h.merkle_root, by_hand);
    }

    #[test]
    fn sealing_an_empty_set_fails() {
        let mut c = chain_with(2);
        c.seal_block(Timestamp::from_millis(1)).unwrap();
        assert!(matches!(c.seal_block(Timestamp::from_millis(2)), Err(LedgerError::NothingToSeal)));
    }

    #[test]
    fn anchors_are_ordered_by_time_then_id() {
        let mut c = AnchorChain::in_memory();
        c.append_anchor(anchor("b", 5)).unwrap();
        c.append_anchor(anchor("z", 1)).unwrap();
        c.append_anchor(anchor("a", 5)).unwrap();
        c.seal_block(Timestamp::from_millis(9)).unwrap();
        let ids: Vec<_> = c.blocks()[0].anchors.iter().map(|a| a.evidence_id.as_str()).collect();
        assert_eq!(ids, ["z", "a", "b"]);
    }

    #[test]
    fn resubmission_is_idempotent_and_conflicts_are_rejected() {
        let mut c = AnchorChain::in_memory();
        let first = c.append_anchor(anchor("ev", 1)).unwrap();
        for _ in 0..5 {
            assert_eq!(c.append_anchor(anchor("ev", 1)).unwrap(), first);
        }
        let mut other = anchor("ev", 1);
        other.content_hash = hash_bytes(b"different");
        assert!(matches!(c.append_anchor(other), Err(LedgerError::Conflict { .. })));
        c.seal_block(Timestamp::from_millis(2)).unwrap();
        assert_eq!(c.blocks()[0].anchors.len(), 1);
        // still idempotent once sealed
        assert_eq!(c.append_anchor(anchor("ev", 1)).unwrap(), first);
        assert!(c.pending().is_empty());
    }

    #[test]
    fn proofs_round_trip_and_reject_tampering() {
        let mut c = chain_with(5);
        let header = c.seal_block(Timestamp::from_millis(10)).unwrap();
        for i in 0..5 {
            let a = anchor(&format!("ev-{i}"), i);
            let proof = c.prove_inclusion(&a.evidence_id).unwrap();
            assert!(c.verify_inclusion(&a, &proof, &header));

            let mut bad = proof.clone();
            if let Some(step) = bad.siblings.first_mut() {
                step.digest.digest[0] ^= 1;
                assert!(!c.verify_inclusion(&a, &bad, &header));
            }
            let mut flipped = proof.clone();
            if let Some(step) = flipped.siblings.first_mut() {
                step.side = match step.side {
                    Side::Left => Side::Right,
                    Side::Right => Side::Left,
                };
                assert!(!c.verify_inclusion(&a, &flipped, &header));
            }
        }
    }

    #[test]
    fn proof_for_pending_or_unknown_anchor_is_not_found() {
        let c = chain_with(1);
        assert!(matches!(c.prove_inclusion(&EvidenceId::new("ev-0").unwrap()), Err(LedgerError::NotFound(_))));
        assert!(matches!(c.prove_inclusion(&EvidenceId::new("nope").unwrap()), Err(LedgerError::NotFound(_))));
    }

    #[test]
    fn forged_header_is_not_on_chain() {
        let mut c = chain_with(2);
        let header = c.seal_block(Timestamp::from_millis(10)).unwrap();
        let a = anchor("ev-0", 0);
        let proof = c.prove_inclusion(&a.evidence_id).unwrap();
        let mut forged = header;
        forged.sealed_at = Timestamp::from_millis(11);
        assert!(!c.verify_inclusion(&a, &proof, &forged));
    }

    #[test]
    fn links_and_historical_mutation() {
        let mut c = AnchorChain::in_memory();
        for b in 0..4 {
            for i in 0..3 {
                c.append_anchor(anchor(&format!("ev-{b}-{i}"), b * 10 + i)).unwrap();
            }
            c.seal_block(Timestamp::from_millis(b * 10 + 9)).unwrap();
        }
        c.verify_chain().unwrap();
        for h in 1..4u64 {
            assert_eq!(c.header(h).unwrap().prev_block_hash, c.header(h - 1).unwrap().hash());
        }
        c.block_mut_for_test(1).anchors[2].submitted_at = Timestamp::from_millis(999);
        assert!(c.verify_chain().is_err());
    }

    #[test]
    fn file_backed_chain_replays_bit_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.log");
        let build = |path: &Path| {
            let mut c = AnchorChain::open(path).unwrap();
            for i in 0..7 {
                c.append_anchor(anchor(&format!("ev-{i}"), i)).unwrap();
                if i % 3 == 2 {
                    c.seal_block(Timestamp::from_millis(100 + i)).unwrap();
                }
            }
            c.tip().copied()
        };
        let tip = build(&path);
        let other = dir.path().join("chain2.log");
        assert_eq!(build(&other), tip);
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&other).unwrap());

        let reopened = AnchorChain::open(&path).unwrap();
        assert_eq!(reopened.tip().copied(), tip);
        assert_eq!(reopened.pending().len(), 1);
        reopened.verify_chain().unwrap();
    }

    #[test]
    fn tampered_chain_file_is_rejected_on_open() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.log");
        {
            let mut c = AnchorChain::open(&path).unwrap();
            c.append_anchor(anchor("ev-0", 0)).unwrap();
            c.seal_block(Timestamp::from_millis(1)).unwrap();
        }
        let mut raw = std::fs::read(&path).unwrap();
        // first anchor record: 4-byte length, tag, then the domain string; flip a byte of the digest area
        raw[60] ^= 0xff;
        std::fs::write(&path, raw).unwrap();
        assert!(AnchorChain::open(&path).is_err());
    }

    #[test]
    fn header_json_uses_hex() {
        let mut c = chain_with(1);
        c.seal_block(Timestamp::from_millis(0)).unwrap();
        let json = c.headers_json();
        assert!(json.contains(&"0".repeat(64)));
        let back: Vec<BlockHeader> = serde_json::from_str(&json).unwrap();
        assert_eq!(back[0], *c.tip().unwrap());
    }
}
