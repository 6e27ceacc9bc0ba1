use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ClaimError;
use crate::evidence::EvidenceId;
use crate::time::Timestamp;

/// Account of the insurer's liquidity pool.
pub const INSURER_POOL: &str = "insurer-pool";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub policy_id: String,
    pub holder: String,
    pub coverage_limit: u64,
    pub deductible: u64,
    pub active: bool,
}

impl Policy {
    pub fn validate(&self) -> Result<(), ClaimError> {
        if self.deductible > self.coverage_limit {
            return Err(ClaimError::InvalidPolicy(format!(
                "deductible {} exceeds coverage limit {}",
                self.deductible, self.coverage_limit
            )));
        }
        if self.policy_id.is_empty() || self.holder.is_empty() {
            return Err(ClaimError::InvalidPolicy("policy id and holder must be non-empty".into()));
        }
        Ok(())
    }
}

/// Cap at the coverage limit, then take off the deductible.
pub fn compute_payout(assessed_amount: u64, policy: &Policy) -> u64 {
    assessed_amount.min(policy.coverage_limit).saturating_sub(policy.deductible)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimState {
    Submitted,
    EvidenceVerified,
    EvidenceRejected,
    UnderAdjudication,
    Approved,
    Denied,
    Settled,
}

impl ClaimState {
    pub const ALL: [ClaimState; 7] = [
        ClaimState::Submitted,
        ClaimState::EvidenceVerified,
        ClaimState::EvidenceRejected,
        ClaimState::UnderAdjudication,
        ClaimState::Approved,
        ClaimState::Denied,
        ClaimState::Settled,
    ];

    /// Edges of the claim graph.
    pub fn can_transition(self, to: ClaimState) -> bool {
        use ClaimState::*;
        matches!(
            (self, to),
            (Submitted, EvidenceVerified)
                | (Submitted, EvidenceRejected)
                | (EvidenceVerified, UnderAdjudication)
                | (UnderAdjudication, Approved)
                | (UnderAdjudication, Denied)
                | (Approved, Settled)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, ClaimState::EvidenceRejected | ClaimState::Denied | ClaimState::Settled)
    }
}

impl fmt::Display for ClaimState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

/// One history line. An entry whose state equals the previous state is a
/// note (e.g. a failed settlement attempt) rather than a transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub state: ClaimState,
    pub at: Timestamp,
    pub cause: String,
    /// Assessed amount on entering Approved, payout on entering Settled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amount: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub claim_id: String,
    pub policy_id: String,
    pub evidence_ids: Vec<EvidenceId>,
    pub state: ClaimState,
    pub assessed_amount: Option<u64>,
    pub payout: Option<u64>,
    /// Adjudication rounds in escalation order.
    #[serde(default)]
    pub rounds: Vec<String>,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Replayed {
    pub state: ClaimState,
    pub assessed_amount: Option<u64>,
    pub payout: Option<u64>,
}

impl Claim {
    pub(crate) fn new(claim_id: String, policy_id: String, evidence_ids: Vec<EvidenceId>, at: Timestamp) -> Self {
        Self {
            claim_id,
            policy_id,
            evidence_ids,
            state: ClaimState::Submitted,
            assessed_amount: None,
            payout: None,
            rounds: Vec::new(),
            history: vec![HistoryEntry {
                state: ClaimState::Submitted,
                at,
                cause: "submitted".into(),
                amount: None,
            }],
        }
    }

    pub(crate) fn transition(
        &mut self,
        to: ClaimState,
        at: Timestamp,
        cause: impl Into<String>,
        amount: Option<u64>,
    ) -> Result<(), ClaimError> {
        if !self.state.can_transition(to) {
            return Err(ClaimError::InvalidTransition {
                claim_id: self.claim_id.clone(),
                from: self.state,
                to,
            });
        }
        self.state = to;
        match to {
            ClaimState::Approved => self.assessed_amount = amount,
            ClaimState::Settled => self.payout = amount,
            _ => {}
        }
        self.history.push(HistoryEntry {
            state: to,
            at,
            cause: cause.into(),
            amount,
        });
        Ok(())
    }

    pub(crate) fn note(&mut self, at: Timestamp, cause: impl Into<String>) {
        self.history.push(HistoryEntry {
            state: self.state,
            at,
            cause: cause.into(),
            amount: None,
        });
    }

    /// Rebuilds state and amounts from the history alone.
    pub fn replay(history: &[HistoryEntry]) -> Result<Replayed, String> {
        let (first, rest) = history.split_first().ok_or("empty history")?;
        if first.state != ClaimState::Submitted {
            return Err(format!("history starts in {}", first.state));
        }
        let mut r = Replayed {
            state: first.state,
            assessed_amount: None,
            payout: None,
        };
        let mut prev_at = first.at;
        for e in rest {
            if e.at < prev_at {
                return Err("history timestamps go backwards".into());
            }
            prev_at = e.at;
            if e.state == r.state {
                continue;
            }
            if !r.state.can_transition(e.state) {
                return Err(format!("illegal transition {} -> {}", r.state, e.state));
            }
            r.state = e.state;
            match e.state {
                ClaimState::Approved => r.assessed_amount = e.amount,
                ClaimState::Settled => r.payout = e.amount,
                _ => {}
            }
        }
        Ok(r)
    }

    /// Checks the claim against its own history and the payout rule.
    pub fn check_consistency(&self) -> Result<(), String> {
        let r = Self::replay(&self.history)?;
        if (r.state, r.assessed_amount, r.payout) != (self.state, self.assessed_amount, self.payout) {
            return Err(format!("replay gives {r:?}, claim holds {:?}", self.state));
        }
        if self.payout.is_some() != (self.state == ClaimState::Settled) {
            return Err("payout must be set exactly when settled".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub from: String,
    pub to: String,
    pub amount: u64,
    pub claim_id: String,
    pub executed_at: Timestamp,
}

/// Integer token balances. Transfers move tokens, only `mint` creates them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bank {
    balances: BTreeMap<String, u64>,
}

impl Bank {
    pub fn with_pool(pool_balance: u64) -> Self {
        let mut bank = Self::default();
        bank.mint(INSURER_POOL, pool_balance);
        bank
    }

    pub fn balance(&self, account: &str) -> u64 {
        self.balances.get(account).copied().unwrap_or(0)
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&str, u64)> {
        self.balances.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn mint(&mut self, account: &str, amount: u64) {
        *self.balances.entry(account.to_owned()).or_default() += amount;
    }

    pub fn total_supply(&self) -> u128 {
        self.balances.values().map(|&v| u128::from(v)).sum()
    }

    pub fn debit(&mut self, account: &str, amount: u64) -> Result<(), ClaimError> {
        let available = self.balance(account);
        if available < amount {
            return Err(ClaimError::InsufficientFunds {
                account: account.to_owned(),
                needed: amount,
                available,
            });
        }
        self.balances.insert(account.to_owned(), available - amount);
        Ok(())
    }

    pub fn credit(&mut self, account: &str, amount: u64) {
        self.mint(account, amount);
    }

    pub fn transfer(&mut self, from: &str, to: &str, amount: u64) -> Result<(), ClaimError> {
        self.debit(from, amount)?;
        self.credit(to, amount);
        Ok(())
    }
}
