//! Claim settlement: the state machine that ties a policy, anchored
//! evidence, an adjudication outcome and the resulting payout together.
//!
//! ```text
//! Submitted -> EvidenceVerified -> UnderAdjudication -> Approved -> Settled
//!           \-> EvidenceRejected                     \-> Denied
//! ```

mod model;

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::{compute_payout, Bank, Claim, ClaimState, HistoryEntry, Policy, Replayed, Transfer, INSURER_POOL};

use crate::adjudication::{AdjudicationEngine, AdjudicationError, Decision, FinalOutcome, Finalization};
use crate::evidence::{EvidenceId, ObjectStore};
use crate::ledger::{DualLedger, LedgerError, PrivateDocument, Verdict};
use crate::par::Parallelism;
use crate::time::{Clock, Timestamp};

#[derive(Debug, Error)]
pub enum ClaimError {
    #[error("unknown policy {0}")]
    UnknownPolicy(String),
    #[error("policy {0} already exists")]
    DuplicatePolicy(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("policy {0} is not active")]
    PolicyInactive(String),
    #[error("unknown claim {0}")]
    UnknownClaim(String),
    #[error("a claim needs at least one evidence item")]
    NoEvidence,
    #[error("claim {claim_id}: {from} cannot move to {to}")]
    InvalidTransition { claim_id: String, from: ClaimState, to: ClaimState },
    #[error("account {account} holds {available}, needs {needed}")]
    InsufficientFunds { account: String, needed: u64, available: u64 },
    #[error("decision does not match the finalized round of claim {0}")]
    DecisionMismatch(String),
    #[error(transparent)]
    Adjudication(#[from] AdjudicationError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("audit log: {0}")]
    Audit(#[from] std::io::Error),
}

/// In-line media screening run alongside hash verification.
pub trait Detector: Send + Sync {
    fn inspect(&self, evidence_id: &EvidenceId, media: &[u8]) -> DetectorVerdict;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "snake_case")]
pub enum DetectorVerdict {
    Pass,
    Flag(String),
}

/// The default detector: passes everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct PassDetector;

impl Detector for PassDetector {
    fn inspect(&self, _: &EvidenceId, _: &[u8]) -> DetectorVerdict {
        DetectorVerdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NotificationKind {
    /// Adjusters are told a new claim exists.
    ClaimSubmitted,
    PanelAssigned { round_id: String, panel: Vec<String> },
    Decided { decision: Decision },
    Settled { payout: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub at: Timestamp,
    pub claim_id: String,
    #[serde(flatten)]
    pub kind: NotificationKind,
}

#[derive(Debug, Serialize)]
struct AuditLine<'a> {
    at: Timestamp,
    claim_id: &'a str,
    state: ClaimState,
    event: &'a str,
}

/// Everything the claims engine owns, serializable as one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimsState {
    pub policies: BTreeMap<String, Policy>,
    pub claims: BTreeMap<String, Claim>,
    pub bank: Bank,
    pub adjudication: AdjudicationEngine,
    pub transfers: Vec<Transfer>,
    pub notifications: Vec<Notification>,
    next_claim: u64,
}

impl ClaimsState {
    pub fn new(adjudication: AdjudicationEngine, insurer_pool: u64) -> Self {
        Self {
            policies: BTreeMap::new(),
            claims: BTreeMap::new(),
            bank: Bank::with_pool(insurer_pool),
            adjudication,
            transfers: Vec::new(),
            notifications: Vec::new(),
            next_claim: 0,
        }
    }

    /// Tokens in bank accounts plus stake and escrow held by adjudication.
    pub fn total_supply(&self) -> u128 {
        self.bank.total_supply() + self.adjudication.holdings()
    }
}

pub struct ClaimsEngine {
    state: ClaimsState,
    store: Arc<ObjectStore>,
    ledger: Arc<DualLedger>,
    clock: Arc<dyn Clock>,
    detector: Box<dyn Detector>,
    parallelism: Parallelism,
    audit: Option<(PathBuf, File)>,
}

impl ClaimsEngine {
    pub fn new(state: ClaimsState, store: Arc<ObjectStore>, ledger: Arc<DualLedger>, clock: Arc<dyn Clock>) -> Self {
        Self {
            state,
            store,
            ledger,
            clock,
            detector: Box::new(PassDetector),
            parallelism: Parallelism::default(),
            audit: None,
        }
    }

    pub fn with_detector(mut self, detector: Box<dyn Detector>) -> Self {
        self.detector = detector;
        self
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    /// Appends one JSON line per claim event to `path`.
    pub fn with_audit_log(mut self, path: impl AsRef<Path>) -> Result<Self, ClaimError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        self.audit = Some((path, file));
        Ok(self)
    }

    pub fn state(&self) -> &ClaimsState {
        &self.state
    }

    pub fn into_state(self) -> ClaimsState {
        self.state
    }

    pub fn adjudication(&self) -> &AdjudicationEngine {
        &self.state.adjudication
    }

    /// Direct access for registering adjusters and relaying votes.
    pub fn adjudication_mut(&mut self) -> &mut AdjudicationEngine {
        &mut self.state.adjudication
    }

    pub fn bank(&self) -> &Bank {
        &self.state.bank
    }

    pub fn bank_mut(&mut self) -> &mut Bank {
        &mut self.state.bank
    }

    pub fn ledger(&self) -> &Arc<DualLedger> {
        &self.ledger
    }

    pub fn claim(&self, claim_id: &str) -> Result<&Claim, ClaimError> {
        self.state
            .claims
            .get(claim_id)
            .ok_or_else(|| ClaimError::UnknownClaim(claim_id.to_owned()))
    }

    fn claim_mut(&mut self, claim_id: &str) -> Result<&mut Claim, ClaimError> {
        self.state
            .claims
            .get_mut(claim_id)
            .ok_or_else(|| ClaimError::UnknownClaim(claim_id.to_owned()))
    }

    pub fn claims(&self) -> impl Iterator<Item = &Claim> {
        self.state.claims.values()
    }

    pub fn policy(&self, policy_id: &str) -> Result<&Policy, ClaimError> {
        self.state
            .policies
            .get(policy_id)
            .ok_or_else(|| ClaimError::UnknownPolicy(policy_id.to_owned()))
    }

    pub fn add_policy(&mut self, policy: Policy) -> Result<(), ClaimError> {
        policy.validate()?;
        if self.state.policies.contains_key(&policy.policy_id) {
            return Err(ClaimError::DuplicatePolicy(policy.policy_id));
        }
        self.state.policies.insert(policy.policy_id.clone(), policy);
        Ok(())
    }

    pub fn set_policy_active(&mut self, policy_id: &str, active: bool) -> Result<(), ClaimError> {
        self.state
            .policies
            .get_mut(policy_id)
            .ok_or_else(|| ClaimError::UnknownPolicy(policy_id.to_owned()))?
            .active = active;
        Ok(())
    }

    fn record(&mut self, claim_id: &str, event: &str, at: Timestamp) -> Result<(), ClaimError> {
        if let Some((_, file)) = &mut self.audit {
            let state = self.state.claims[claim_id].state;
            let line = serde_json::to_string(&AuditLine { at, claim_id, state, event }).expect("plain struct");
            writeln!(file, "{line}")?;
        }
        Ok(())
    }

    fn notify(&mut self, claim_id: &str, kind: NotificationKind, at: Timestamp) {
        self.state.notifications.push(Notification {
            at,
            claim_id: claim_id.to_owned(),
            kind,
        });
    }

    pub fn submit_claim(&mut self, policy_id: &str, evidence_ids: Vec<EvidenceId>) -> Result<Claim, ClaimError> {
        let policy = self.policy(policy_id)?;
        if !policy.active {
            return Err(ClaimError::PolicyInactive(policy_id.to_owned()));
        }
        if evidence_ids.is_empty() {
            return Err(ClaimError::NoEvidence);
        }
        let at = self.clock.now();
        self.state.next_claim += 1;
        let claim_id = format!("claim-{:06}", self.state.next_claim);
        let claim = Claim::new(claim_id.clone(), policy_id.to_owned(), evidence_ids, at);
        self.state.claims.insert(claim_id.clone(), claim.clone());
        self.notify(&claim_id, NotificationKind::ClaimSubmitted, at);
        self.record(&claim_id, "submitted", at)?;
        Ok(claim)
    }

    fn require(&self, claim_id: &str, expected: ClaimState, to: ClaimState) -> Result<&Claim, ClaimError> {
        let claim = self.claim(claim_id)?;
        if claim.state != expected {
            return Err(ClaimError::InvalidTransition {
                claim_id: claim_id.to_owned(),
                from: claim.state,
                to,
            });
        }
        Ok(claim)
    }

    /// Cross-verifies every evidence item against both ledgers and runs
    /// the detector over the ones that verify.
    pub fn verify_evidence(&mut self, claim_id: &str) -> Result<&Claim, ClaimError> {
        let ids = self
            .require(claim_id, ClaimState::Submitted, ClaimState::EvidenceVerified)?
            .evidence_ids
            .clone();
        let media: Vec<Vec<u8>> = ids
            .iter()
            .map(|id| self.store.read_media(id).unwrap_or_default())
            .collect();
        let items: Vec<(EvidenceId, &[u8])> = ids.iter().cloned().zip(media.iter().map(Vec::as_slice)).collect();
        let reports = self.ledger.cross_verify_batch(self.parallelism, &items);

        let mut causes = Vec::new();
        for ((id, bytes), report) in items.iter().zip(&reports) {
            if report.verdict != Verdict::Verified {
                causes.push(format!("{id}: {:?} ({})", report.verdict, report.details));
            } else if let DetectorVerdict::Flag(reason) = self.detector.inspect(id, bytes) {
                causes.push(format!("{id}: flagged by detector ({reason})"));
            }
        }
        let at = self.clock.now();
        let claim = self.claim_mut(claim_id)?;
        if causes.is_empty() {
            claim.transition(ClaimState::EvidenceVerified, at, "all evidence verified", None)?;
            self.record(claim_id, "evidence_verified", at)?;
        } else {
            claim.transition(ClaimState::EvidenceRejected, at, causes.join("; "), None)?;
            self.record(claim_id, "evidence_rejected", at)?;
        }
        self.claim(claim_id)
    }

    /// Moves the arbitration fee from the insurer pool into escrow and
    /// draws the first panel.
    pub fn open_adjudication(&mut self, claim_id: &str) -> Result<String, ClaimError> {
        self.require(claim_id, ClaimState::EvidenceVerified, ClaimState::UnderAdjudication)?;
        let fee = self.state.adjudication.params().fee_pool;
        let available = self.state.bank.balance(INSURER_POOL);
        if available < fee {
            return Err(ClaimError::InsufficientFunds {
                account: INSURER_POOL.into(),
                needed: fee,
                available,
            });
        }
        let round_id = self.state.adjudication.open_round(claim_id, fee)?;
        self.state.bank.debit(INSURER_POOL, fee)?;
        let panel = self.state.adjudication.round(&round_id)?.panel.iter().map(|a| a.0.clone()).collect();
        let at = self.clock.now();
        let claim = self.claim_mut(claim_id)?;
        claim.rounds.push(round_id.clone());
        claim.transition(ClaimState::UnderAdjudication, at, format!("panel drawn for {round_id}"), None)?;
        self.notify(claim_id, NotificationKind::PanelAssigned { round_id: round_id.clone(), panel }, at);
        self.record(claim_id, "adjudication_opened", at)?;
        Ok(round_id)
    }

    /// The claim's current adjudication round.
    pub fn current_round(&self, claim_id: &str) -> Result<String, ClaimError> {
        self.claim(claim_id)?
            .rounds
            .last()
            .cloned()
            .ok_or_else(|| ClaimError::InvalidTransition {
                claim_id: claim_id.to_owned(),
                from: self.claim(claim_id).map(|c| c.state).unwrap_or(ClaimState::Submitted),
                to: ClaimState::Approved,
            })
    }

    /// Finalizes the current round. An escalation keeps the claim under
    /// adjudication with the new round; a decision is applied.
    pub fn finalize_adjudication(&mut self, claim_id: &str) -> Result<Finalization, ClaimError> {
        self.require(claim_id, ClaimState::UnderAdjudication, ClaimState::Approved)?;
        let round_id = self.current_round(claim_id)?;
        let fin = self.state.adjudication.finalize(&round_id)?;
        self.state.bank.credit(INSURER_POOL, fin.insurer_credit);
        let at = self.clock.now();
        match &fin.outcome {
            FinalOutcome::Escalated { next_round } => {
                let claim = self.claim_mut(claim_id)?;
                claim.rounds.push(next_round.clone());
                claim.note(at, format!("{round_id} tied, escalated to {next_round}"));
                let panel = self.state.adjudication.round(next_round)?.panel.iter().map(|a| a.0.clone()).collect();
                self.notify(claim_id, NotificationKind::PanelAssigned { round_id: next_round.clone(), panel }, at);
                self.record(claim_id, "escalated", at)?;
            }
            FinalOutcome::Decided { decision, .. } => {
                self.apply_decision(claim_id, *decision)?;
            }
        }
        Ok(fin)
    }

    /// Applies the decision of the claim's finalized round.
    pub fn apply_decision(&mut self, claim_id: &str, decision: Decision) -> Result<&Claim, ClaimError> {
        self.require(claim_id, ClaimState::UnderAdjudication, ClaimState::Approved)?;
        let round_id = self.current_round(claim_id)?;
        if self.state.adjudication.round(&round_id)?.decision() != Some(decision) {
            return Err(ClaimError::DecisionMismatch(claim_id.to_owned()));
        }
        let at = self.clock.now();
        let claim = self.claim_mut(claim_id)?;
        if decision.validity {
            claim.transition(
                ClaimState::Approved,
                at,
                format!("{round_id} assessed {}", decision.amount),
                Some(decision.amount),
            )?;
        } else {
            claim.transition(ClaimState::Denied, at, format!("{round_id} found the claim invalid"), None)?;
        }
        self.notify(claim_id, NotificationKind::Decided { decision }, at);
        self.record(claim_id, if decision.validity { "approved" } else { "denied" }, at)?;
        self.claim(claim_id)
    }

    /// Pays the holder from the insurer pool. A zero payout settles
    /// without a transfer. An underfunded pool blocks settlement and
    /// leaves a note in the claim history.
    pub fn settle(&mut self, claim_id: &str) -> Result<Option<Transfer>, ClaimError> {
        let claim = self.require(claim_id, ClaimState::Approved, ClaimState::Settled)?;
        let policy = self.policy(&claim.policy_id)?.clone();
        let payout = compute_payout(claim.assessed_amount.unwrap_or(0), &policy);
        let at = self.clock.now();
        if let Err(e) = self.state.bank.debit(INSURER_POOL, payout) {
            self.claim_mut(claim_id)?.note(at, format!("funding failure: {e}"));
            self.record(claim_id, "funding_failure", at)?;
            return Err(e);
        }
        let transfer = (payout > 0).then(|| Transfer {
            from: INSURER_POOL.into(),
            to: policy.holder.clone(),
            amount: payout,
            claim_id: claim_id.to_owned(),
            executed_at: at,
        });
        if let Some(t) = &transfer {
            let doc = PrivateDocument {
                doc_id: format!("transfer-{claim_id}"),
                kind: "transfer".into(),
                body: serde_json::to_value(t).expect("plain struct"),
                written_at: at,
            };
            if let Err(e) = self.ledger.record_document(doc, at) {
                self.state.bank.credit(INSURER_POOL, payout);
                return Err(e.into());
            }
            self.state.bank.credit(&policy.holder, payout);
            self.state.transfers.push(t.clone());
        }
        self.claim_mut(claim_id)?
            .transition(ClaimState::Settled, at, format!("paid {payout}"), Some(payout))?;
        self.notify(claim_id, NotificationKind::Settled { payout }, at);
        self.record(claim_id, "settled", at)?;
        Ok(transfer)
    }

    pub fn claim_json(&self, claim_id: &str) -> Result<String, ClaimError> {
        Ok(serde_json::to_string_pretty(self.claim(claim_id)?).expect("plain struct"))
    }

    pub fn audit_path(&self) -> Option<&Path> {
        self.audit.as_ref().map(|(p, _)| p.as_path())
    }
}
