//! Staked Schelling-game adjudication.
//!
//! A panel of loss adjusters is drawn with probability proportional to free
//! stake, each locks a fixed stake, votes on `(validity, amount)` through
//! commit-reveal, and the locked stakes are then redistributed from
//! incoherent and absent jurors to coherent ones.

mod engine;
mod panel;
mod redistribute;
mod registry;
mod round;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{AdjudicationEngine, FinalOutcome, Finalization};
pub use panel::select_panel;
pub use redistribute::{coherent, redistribute, redistribute_escalated, slash_total, JurorStatus};
pub use registry::{Adjuster, AdjusterRegistry};
pub use round::{tally, AdjudicationRound, Phase, RoundTranscript, TallyOutcome};

use crate::codec::CanonicalWriter;
use crate::evidence::{hash_bytes, ContentHash};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AdjusterId(pub String);

impl fmt::Display for AdjusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AdjusterId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdjudicationParams {
    /// Jurors per first-instance panel; odd.
    pub panel_size: u32,
    /// Tokens each juror locks for the duration of a round.
    pub stake_lock: u64,
    /// Fraction of the locked stake forfeited by incoherent or absent jurors.
    pub slash_fraction: f64,
    /// Arbitration fee paid to coherent jurors of the deciding round.
    pub fee_pool: u64,
    /// Relative half-width of the amount coherence band around the decision.
    pub amount_tolerance: f64,
    pub max_escalations: u32,
    #[serde(with = "hex_seed")]
    pub rng_seed: [u8; 32],
}

impl Default for AdjudicationParams {
    fn default() -> Self {
        Self {
            panel_size: 3,
            stake_lock: 100,
            slash_fraction: 0.5,
            fee_pool: 50,
            amount_tolerance: 0.10,
            max_escalations: 2,
            rng_seed: [0; 32],
        }
    }
}

impl AdjudicationParams {
    pub fn validate(&self) -> Result<(), AdjudicationError> {
        let bad = |why: &str| Err(AdjudicationError::InvalidParams(why.to_owned()));
        if self.panel_size == 0 || self.panel_size.is_multiple_of(2) {
            return bad("panel_size must be an odd positive integer");
        }
        if self.stake_lock == 0 {
            return bad("stake_lock must be positive");
        }
        if !(self.slash_fraction > 0.0 && self.slash_fraction <= 1.0) {
            return bad("slash_fraction must be in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.amount_tolerance) {
            return bad("amount_tolerance must be in [0, 1)");
        }
        Ok(())
    }

    /// `floor(slash_fraction * stake_lock)`.
    pub fn slash_amount(&self) -> u64 {
        ((self.slash_fraction * self.stake_lock as f64).floor() as u64).min(self.stake_lock)
    }
}

mod hex_seed {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(seed))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("rng_seed must be 32 bytes of hex"))
    }
}

const VOTE_DOMAIN: &str = "tamperproof.vote.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub validity: bool,
    /// Assessed damage; only meaningful when `validity` is true.
    pub amount: u64,
    #[serde(with = "hex_seed")]
    pub salt: [u8; 32],
}

impl Vote {
    /// Canonical vote bytes, bound to the round and the juror so a
    /// commitment cannot be replayed by someone else.
    pub fn canonical_bytes(&self, round_id: &str, adjuster: &AdjusterId) -> Vec<u8> {
        let mut w = CanonicalWriter::with_domain(VOTE_DOMAIN);
        w.str(round_id)
            .str(&adjuster.0)
            .bool(self.validity)
            .u64(self.amount)
            .raw(&self.salt);
        w.finish()
    }

    pub fn commitment(&self, round_id: &str, adjuster: &AdjusterId) -> ContentHash {
        hash_bytes(&self.canonical_bytes(round_id, adjuster))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub validity: bool,
    pub amount: u64,
}

impl Decision {
    pub const DENIED: Decision = Decision {
        validity: false,
        amount: 0,
    };
}

/// Where a stake movement lands.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Account {
    Adjuster(AdjusterId),
    InsurerPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeltaReason {
    Slash,
    RedistributionShare,
    FeeShare,
    NoReveal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StakeDelta {
    pub account: Account,
    pub delta: i64,
    pub reason: DeltaReason,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdjudicationError {
    #[error("invalid adjudication parameters: {0}")]
    InvalidParams(String),
    #[error("stake {stake} is below the minimum of {minimum}")]
    StakeBelowMinimum { stake: u64, minimum: u64 },
    #[error("certificate must not be empty")]
    EmptyCertificate,
    #[error("adjuster {0} is already registered")]
    DuplicateAdjuster(AdjusterId),
    #[error("only {eligible} eligible adjusters, panel needs {needed}")]
    InsufficientPool { eligible: usize, needed: usize },
    #[error("unknown round {0}")]
    UnknownRound(String),
    #[error("round {0} already exists")]
    RoundExists(String),
    #[error("unknown adjuster {0}")]
    UnknownAdjuster(AdjusterId),
    #[error("round is in {actual:?} phase, operation needs {expected:?}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("adjuster {0} is not on this panel")]
    NotOnPanel(AdjusterId),
    #[error("adjuster {0} already committed")]
    AlreadyCommitted(AdjusterId),
    #[error("adjuster {0} has no commitment to reveal")]
    NotCommitted(AdjusterId),
    #[error("adjuster {0} already revealed or forfeited the reveal")]
    AlreadyRevealed(AdjusterId),
    #[error("reveal from {0} does not match its commitment")]
    CommitmentMismatch(AdjusterId),
    #[error("reveal phase still open: {0} committed jurors have not revealed")]
    RevealIncomplete(usize),
}
