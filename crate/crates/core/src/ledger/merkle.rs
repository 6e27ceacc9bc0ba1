//! Binary Merkle commitments over anchor records.
//!
//! Leaves are `H(0x00 || data)`, interior nodes `H(0x01 || left || right)`.
//! Levels are built pairwise left to right and an unpaired last node is
//! promoted unchanged to the next level.

use serde::{Deserialize, Serialize};

use crate::evidence::{hash_parts, hex_digest, ContentHash};

pub const LEAF_PREFIX: u8 = 0x00;
pub const NODE_PREFIX: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// One step of an inclusion path: the sibling digest and which side it sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofStep {
    #[serde(with = "hex_digest")]
    pub digest: ContentHash,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf_index: u32,
    pub siblings: Vec<ProofStep>,
    pub block_height: u64,
}

pub fn leaf_hash(data: &[u8]) -> ContentHash {
    hash_parts(&[&[LEAF_PREFIX], data])
}

pub fn node_hash(left: &ContentHash, right: &ContentHash) -> ContentHash {
    hash_parts(&[&[NODE_PREFIX], &left.digest, &right.digest])
}

fn next_level(level: &[ContentHash]) -> Vec<ContentHash> {
    level
        .chunks(2)
        .map(|pair| match pair {
            [l, r] => node_hash(l, r),
            [single] => *single,
            _ => unreachable!(),
        })
        .collect()
}

/// Root over already leaf-hashed digests; `None` for an empty tree.
pub fn merkle_root(leaves: &[ContentHash]) -> Option<ContentHash> {
    if leaves.is_empty() {
        return None;
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = next_level(&level);
    }
    Some(level[0])
}

/// Sibling path for `index`, bottom-up. `None` if out of range.
pub fn inclusion_path(leaves: &[ContentHash], index: usize) -> Option<Vec<ProofStep>> {
    if index >= leaves.len() {
        return None;
    }
    let mut steps = Vec::new();
    let mut level = leaves.to_vec();
    let mut i = index;
    while level.len() > 1 {
        if i % 2 == 1 {
            steps.push(ProofStep {
                digest: level[i - 1],
                side: Side::Left,
            });
        } else if i + 1 < level.len() {
            steps.push(ProofStep {
                digest: level[i + 1],
                side: Side::Right,
            });
        }
        level = next_level(&level);
        i /= 2;
    }
    Some(steps)
}

/// Folds a leaf digest up through its sibling path.
pub fn fold_path(leaf: ContentHash, steps: &[ProofStep]) -> ContentHash {
    steps.iter().fold(leaf, |acc, step| match step.side {
        Side::Left => node_hash(&step.digest, &acc),
        Side::Right => node_hash(&acc, &step.digest),
    })
}
