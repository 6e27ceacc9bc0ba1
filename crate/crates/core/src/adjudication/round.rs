use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::redistribute::JurorStatus;
use super::{AdjudicationError, AdjudicationParams, AdjusterId, Decision, StakeDelta, Vote};
use crate::evidence::{hex_digest, ContentHash};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Commit,
    Reveal,
    Finalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TallyOutcome {
    /// `defaulted` is set when the escalation budget ran out and the claim
    /// was denied by default.
    Decided { decision: Decision, defaulted: bool },
    Escalate { panel_size: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Commitment(#[serde(with = "hex_digest")] ContentHash);

/// One commit-reveal voting game for one claim at one escalation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationRound {
    pub round_id: String,
    pub claim_id: String,
    pub escalation_level: u32,
    pub panel: Vec<AdjusterId>,
    pub phase: Phase,
    commitments: BTreeMap<AdjusterId, Commitment>,
    reveals: BTreeMap<AdjusterId, Vote>,
    /// Jurors whose reveal failed to match their commitment.
    forfeited: BTreeSet<AdjusterId>,
    reveal_closed: bool,
    pub stake_lock: u64,
    /// Arbitration fee held for the deciding round of this dispute.
    pub fee_escrow: u64,
    pub outcome: Option<TallyOutcome>,
    pub deltas: Option<Vec<StakeDelta>>,
}

impl AdjudicationRound {
    pub fn new(
        round_id: String,
        claim_id: String,
        escalation_level: u32,
        panel: Vec<AdjusterId>,
        stake_lock: u64,
        fee_escrow: u64,
    ) -> Self {
        Self {
            round_id,
            claim_id,
            escalation_level,
            panel,
            phase: Phase::Commit,
            commitments: BTreeMap::new(),
            reveals: BTreeMap::new(),
            forfeited: BTreeSet::new(),
            reveal_closed: false,
            stake_lock,
            fee_escrow,
            outcome: None,
            deltas: None,
        }
    }

    /// A round already past its reveal deadline, holding `votes` (panel
    /// order, `None` for an absent juror). For models that skip commits.
    pub(crate) fn with_reveals(
        round_id: String,
        panel: Vec<AdjusterId>,
        votes: &[Option<Vote>],
        stake_lock: u64,
        fee_escrow: u64,
    ) -> Self {
        let mut round = Self::new(round_id.clone(), round_id, 0, panel, stake_lock, fee_escrow);
        for (who, vote) in round.panel.iter().zip(votes) {
            if let Some(v) = vote {
                round.reveals.insert(who.clone(), *v);
            }
        }
        round.phase = Phase::Reveal;
        round.reveal_closed = true;
        round
    }

    fn expect_phase(&self, expected: Phase) -> Result<(), AdjudicationError> {
        if self.phase == expected {
            Ok(())
        } else {
            Err(AdjudicationError::WrongPhase {
                expected,
                actual: self.phase,
            })
        }
    }

    fn expect_panelist(&self, adjuster: &AdjusterId) -> Result<(), AdjudicationError> {
        if self.panel.contains(adjuster) {
            Ok(())
        } else {
            Err(AdjudicationError::NotOnPanel(adjuster.clone()))
        }
    }

    /// Records a commitment. The round moves to Reveal once every panelist
    /// has committed.
    pub fn commit_vote(&mut self, adjuster: &AdjusterId, commitment: ContentHash) -> Result<(), AdjudicationError> {
        self.expect_phase(Phase::Commit)?;
        self.expect_panelist(adjuster)?;
        if self.commitments.contains_key(adjuster) {
            return Err(AdjudicationError::AlreadyCommitted(adjuster.clone()));
        }
        self.commitments.insert(adjuster.clone(), Commitment(commitment));
        if self.commitments.len() == self.panel.len() {
            self.phase = Phase::Reveal;
        }
        Ok(())
    }

    /// Commit deadline: panelists who have not committed will count as
    /// absent.
    pub fn close_commits(&mut self) -> Result<(), AdjudicationError> {
        self.expect_phase(Phase::Commit)?;
        self.phase = Phase::Reveal;
        Ok(())
    }

    /// Accepts a reveal that hashes to the stored commitment. A mismatching
    /// reveal is refused and the juror is treated as absent from then on.
    pub fn reveal_vote(&mut self, adjuster: &AdjusterId, vote: Vote) -> Result<(), AdjudicationError> {
        self.expect_phase(Phase::Reveal)?;
        self.expect_panelist(adjuster)?;
        if self.reveal_closed {
            return Err(AdjudicationError::WrongPhase {
                expected: Phase::Reveal,
                actual: Phase::Reveal,
            });
        }
        let Some(Commitment(committed)) = self.commitments.get(adjuster) else {
            return Err(AdjudicationError::NotCommitted(adjuster.clone()));
        };
        if self.reveals.contains_key(adjuster) || self.forfeited.contains(adjuster) {
            return Err(AdjudicationError::AlreadyRevealed(adjuster.clone()));
        }
        if vote.commitment(&self.round_id, adjuster) != *committed {
            self.forfeited.insert(adjuster.clone());
            return Err(AdjudicationError::CommitmentMismatch(adjuster.clone()));
        }
        self.reveals.insert(adjuster.clone(), vote);
        Ok(())
    }

    /// Reveal deadline: committed jurors who have not revealed count as absent.
    pub fn close_reveals(&mut self) -> Result<(), AdjudicationError> {
        self.expect_phase(Phase::Reveal)?;
        self.reveal_closed = true;
        Ok(())
    }

    /// Committed jurors that have neither revealed nor forfeited.
    pub fn outstanding_reveals(&self) -> usize {
        self.commitments
            .keys()
            .filter(|a| !self.reveals.contains_key(*a) && !self.forfeited.contains(*a))
            .count()
    }

    pub fn ready_to_tally(&self) -> bool {
        self.phase == Phase::Reveal && (self.reveal_closed || self.outstanding_reveals() == 0)
    }

    /// Accepted reveals in panel order.
    pub fn revealed_votes(&self) -> Vec<(AdjusterId, Vote)> {
        self.panel
            .iter()
            .filter_map(|a| self.reveals.get(a).map(|v| (a.clone(), *v)))
            .collect()
    }

    /// Each panelist's status in panel order; anyone without an accepted
    /// reveal is absent.
    pub fn juror_statuses(&self) -> Vec<(AdjusterId, JurorStatus)> {
        self.panel
            .iter()
            .map(|a| {
                let status = match self.reveals.get(a) {
                    Some(v) => JurorStatus::Revealed(*v),
                    None => JurorStatus::NoReveal,
                };
                (a.clone(), status)
            })
            .collect()
    }

    pub fn commitment_of(&self, adjuster: &AdjusterId) -> Option<ContentHash> {
        self.commitments.get(adjuster).map(|c| c.0)
    }

    pub fn decision(&self) -> Option<Decision> {
        match self.outcome {
            Some(TallyOutcome::Decided { decision, .. }) => Some(decision),
            _ => None,
        }
    }

    pub(crate) fn finalize(&mut self, outcome: TallyOutcome, deltas: Vec<StakeDelta>) {
        self.phase = Phase::Finalized;
        self.outcome = Some(outcome);
        self.deltas = Some(deltas);
    }

    pub fn transcript(&self) -> RoundTranscript {
        RoundTranscript {
            round_id: self.round_id.clone(),
            claim_id: self.claim_id.clone(),
            escalation_level: self.escalation_level,
            phase: self.phase,
            panel: self.panel.clone(),
            commitments: self
                .panel
                .iter()
                .filter_map(|a| self.commitments.get(a).map(|c| (a.clone(), c.0.to_hex())))
                .collect(),
            reveals: self.revealed_votes(),
            forfeited: self.forfeited.iter().cloned().collect(),
            outcome: self.outcome,
            deltas: self.deltas.clone().unwrap_or_default(),
        }
    }
}

/// Audit export of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTranscript {
    pub round_id: String,
    pub claim_id: String,
    pub escalation_level: u32,
    pub phase: Phase,
    pub panel: Vec<AdjusterId>,
    pub commitments: Vec<(AdjusterId, String)>,
    pub reveals: Vec<(AdjusterId, Vote)>,
    pub forfeited: Vec<AdjusterId>,
    pub outcome: Option<TallyOutcome>,
    pub deltas: Vec<StakeDelta>,
}

/// Majority on validity, lower median on amount; ties and empty rounds
/// escalate to a `2k+1` panel until `max_escalations` is spent, after which
/// the claim is denied.
pub fn tally(round: &AdjudicationRound, params: &AdjudicationParams) -> TallyOutcome {
    let votes = round.revealed_votes();
    let yes = votes.iter().filter(|(_, v)| v.validity).count();
    let no = votes.len() - yes;
    if yes == no {
        return if round.escalation_level < params.max_escalations {
            TallyOutcome::Escalate {
                panel_size: 2 * round.panel.len() as u32 + 1,
            }
        } else {
            TallyOutcome::Decided {
                decision: Decision::DENIED,
                defaulted: true,
            }
        };
    }
    let decision = if yes > no {
        let mut amounts: Vec<u64> = votes.iter().filter(|(_, v)| v.validity).map(|(_, v)| v.amount).collect();
        amounts.sort_unstable();
        Decision {
            validity: true,
            amount: amounts[(amounts.len() - 1) / 2],
        }
    } else {
        Decision::DENIED
    };
    TallyOutcome::Decided {
        decision,
        defaulted: false,
    }
}
