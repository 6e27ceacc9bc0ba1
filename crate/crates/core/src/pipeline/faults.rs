use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Processing stages that can be made to fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Read,
    Hash,
    Store,
    PrivateWrite,
    PublicWrite,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Read, Stage::Hash, Stage::Store, Stage::PrivateWrite, Stage::PublicWrite];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Read => "read",
            Stage::Hash => "hash",
            Stage::Store => "store",
            Stage::PrivateWrite => "private_write",
            Stage::PublicWrite => "public_write",
        };
        f.write_str(s)
    }
}

/// Injected transient failures.
///
/// `nth` fails the n-th call (1-based, counted across all events) of a
/// stage; `attempts` fails a given delivery attempt of one event at a stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultPlan {
    pub nth: BTreeSet<(Stage, u64)>,
    pub attempts: BTreeSet<(String, u32, Stage)>,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn fail_nth(mut self, stage: Stage, n: u64) -> Self {
        self.nth.insert((stage, n));
        self
    }

    pub fn fail_attempt(mut self, event_id: impl Into<String>, attempt: u32, stage: Stage) -> Self {
        self.attempts.insert((event_id.into(), attempt, stage));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.nth.is_empty() && self.attempts.is_empty()
    }
}

#[derive(Debug, Default)]
pub(crate) struct FaultInjector {
    plan: FaultPlan,
    calls: [AtomicU64; 5],
}

impl FaultInjector {
    pub(crate) fn new(plan: FaultPlan) -> Self {
        Self {
            plan,
            calls: Default::default(),
        }
    }

    /// Counts a call to `stage` and reports whether it should fail.
    pub(crate) fn trips(&self, stage: Stage, event_id: &str, attempt: u32) -> bool {
        if self.plan.is_empty() {
            return false;
        }
        let n = self.calls[stage.index()].fetch_add(1, Ordering::SeqCst) + 1;
        self.plan.nth.contains(&(stage, n)) || self.plan.attempts.contains(&(event_id.to_owned(), attempt, stage))
    }
}
