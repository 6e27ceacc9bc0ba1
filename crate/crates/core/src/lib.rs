//! Tamper-evident evidence provenance and stake-incentivized claim
//! adjudication for autonomous-vehicle insurance.
//!
//! Accident media is hashed and signed at capture ([`evidence`]), anchored
//! in a hash-linked public chain and a private metadata ledger
//! ([`ledger`]) by an at-least-once ingestion [`pipeline`], and then backs
//! insurance [`claims`] that a staked panel of loss adjusters decides by
//! commit-reveal Schelling voting ([`adjudication`]). [`sim`] runs the whole
//! flow at population scale.

pub mod adjudication;
pub mod claims;
pub mod cli;
pub mod codec;
pub mod evidence;
pub mod ledger;
pub mod par;
pub mod pipeline;
pub mod sim;
pub mod time;

pub use par::Parallelism;
pub use time::{Clock, LogicalClock, SystemClock, Timestamp};
