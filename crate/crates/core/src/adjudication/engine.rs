use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::panel::select_panel;
use super::redistribute::{coherent, redistribute, redistribute_escalated, JurorStatus};
use super::round::{tally, AdjudicationRound, Phase, TallyOutcome};
use super::{Account, AdjudicationError, AdjudicationParams, AdjusterId, AdjusterRegistry, Decision, DeltaReason, StakeDelta, Vote};
use crate::evidence::ContentHash;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FinalOutcome {
    Decided { decision: Decision, defaulted: bool },
    Escalated { next_round: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finalization {
    pub round_id: String,
    pub outcome: FinalOutcome,
    pub deltas: Vec<StakeDelta>,
    /// Tokens leaving the adjudication engine for the insurer pool:
    /// unclaimed slashes plus any unpaid fee escrow.
    pub insurer_credit: u64,
}

/// Adjuster pool plus every round it has run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationEngine {
    params: AdjudicationParams,
    registry: AdjusterRegistry,
    rounds: BTreeMap<String, AdjudicationRound>,
    next_adjuster: u64,
}

impl AdjudicationEngine {
    pub fn new(params: AdjudicationParams) -> Result<Self, AdjudicationError> {
        params.validate()?;
        Ok(Self {
            params,
            registry: AdjusterRegistry::new(),
            rounds: BTreeMap::new(),
            next_adjuster: 0,
        })
    }

    pub fn params(&self) -> &AdjudicationParams {
        &self.params
    }

    pub fn registry(&self) -> &AdjusterRegistry {
        &self.registry
    }

    pub fn round(&self, round_id: &str) -> Result<&AdjudicationRound, AdjudicationError> {
        self.rounds
            .get(round_id)
            .ok_or_else(|| AdjudicationError::UnknownRound(round_id.to_owned()))
    }

    fn round_mut(&mut self, round_id: &str) -> Result<&mut AdjudicationRound, AdjudicationError> {
        self.rounds
            .get_mut(round_id)
            .ok_or_else(|| AdjudicationError::UnknownRound(round_id.to_owned()))
    }

    pub fn rounds(&self) -> impl Iterator<Item = &AdjudicationRound> {
        self.rounds.values()
    }

    /// Adds a certified adjuster with a generated id; the stake must cover
    /// at least one round lock.
    pub fn register_adjuster(&mut self, certificate: &str, initial_stake: u64) -> Result<AdjusterId, AdjudicationError> {
        let id = AdjusterId(format!("adj-{:04}", self.next_adjuster));
        self.register_adjuster_with_id(id, certificate, initial_stake)
    }

    pub fn register_adjuster_with_id(
        &mut self,
        id: AdjusterId,
        certificate: &str,
        initial_stake: u64,
    ) -> Result<AdjusterId, AdjudicationError> {
        self.registry
            .register(id.clone(), certificate, initial_stake, self.params.stake_lock)?;
        self.next_adjuster += 1;
        Ok(id)
    }

    /// Draws a first-instance panel for `claim_id`, locks its stakes and
    /// escrows `fee_escrow` for whichever round ends up deciding.
    pub fn open_round(&mut self, claim_id: &str, fee_escrow: u64) -> Result<String, AdjudicationError> {
        self.open_level(claim_id, 0, self.params.panel_size as usize, fee_escrow)
    }

    fn open_level(&mut self, claim_id: &str, level: u32, size: usize, fee_escrow: u64) -> Result<String, AdjudicationError> {
        let round_id = format!("{claim_id}-r{level}");
        if self.rounds.contains_key(&round_id) {
            return Err(AdjudicationError::RoundExists(round_id));
        }
        let panel = select_panel(claim_id, level, size, &self.params, &self.registry)?;
        for juror in &panel {
            self.registry.lock(juror, self.params.stake_lock)?;
        }
        let round = AdjudicationRound::new(
            round_id.clone(),
            claim_id.to_owned(),
            level,
            panel,
            self.params.stake_lock,
            fee_escrow,
        );
        self.rounds.insert(round_id.clone(), round);
        Ok(round_id)
    }

    pub fn commit(&mut self, round_id: &str, adjuster: &AdjusterId, commitment: ContentHash) -> Result<(), AdjudicationError> {
        self.round_mut(round_id)?.commit_vote(adjuster, commitment)
    }

    pub fn reveal(&mut self, round_id: &str, adjuster: &AdjusterId, vote: Vote) -> Result<(), AdjudicationError> {
        self.round_mut(round_id)?.reveal_vote(adjuster, vote)
    }

    pub fn close_commits(&mut self, round_id: &str) -> Result<(), AdjudicationError> {
        self.round_mut(round_id)?.close_commits()
    }

    pub fn close_reveals(&mut self, round_id: &str) -> Result<(), AdjudicationError> {
        self.round_mut(round_id)?.close_reveals()
    }

    /// Tallies a round whose reveals are complete (or closed), settles the
    /// stakes of its panel and, on a tie, opens the escalated round.
    pub fn finalize(&mut self, round_id: &str) -> Result<Finalization, AdjudicationError> {
        let params = self.params;
        let round = self.round(round_id)?;
        if round.phase != Phase::Reveal {
            return Err(AdjudicationError::WrongPhase {
                expected: Phase::Reveal,
                actual: round.phase,
            });
        }
        if !round.ready_to_tally() {
            return Err(AdjudicationError::RevealIncomplete(round.outstanding_reveals()));
        }
        let claim_id = round.claim_id.clone();
        let level = round.escalation_level;
        let fee_escrow = round.fee_escrow;

        let mut outcome = tally(round, &params);
        if let TallyOutcome::Escalate { panel_size } = outcome {
            match self.open_level(&claim_id, level + 1, panel_size as usize, fee_escrow) {
                Ok(next_round) => {
                    let round = self.round(round_id)?;
                    let deltas = redistribute_escalated(round, &params);
                    let insurer_credit = self.settle_panel(round_id, &deltas, None, outcome)?;
                    return Ok(Finalization {
                        round_id: round_id.to_owned(),
                        outcome: FinalOutcome::Escalated { next_round },
                        deltas,
                        insurer_credit,
                    });
                }
                // nobody left to escalate to: deny by default
                Err(AdjudicationError::InsufficientPool { .. }) => {
                    outcome = TallyOutcome::Decided {
                        decision: Decision::DENIED,
                        defaulted: true,
                    };
                }
                Err(e) => return Err(e),
            }
        }
        let TallyOutcome::Decided { decision, defaulted } = outcome else {
            unreachable!("escalation handled above");
        };
        let deltas = redistribute(self.round(round_id)?, &decision, &params);
        let fees_paid: i64 = deltas
            .iter()
            .filter(|d| d.reason == DeltaReason::FeeShare)
            .map(|d| d.delta)
            .sum();
        let refund = fee_escrow - fees_paid as u64;
        let insurer_credit = self.settle_panel(round_id, &deltas, Some(decision), outcome)? + refund;
        Ok(Finalization {
            round_id: round_id.to_owned(),
            outcome: FinalOutcome::Decided { decision, defaulted },
            deltas,
            insurer_credit,
        })
    }

    // Unlocks every panel stake, applies deltas, updates reputation and
    // closes the round. Returns the amount credited to the insurer pool.
    fn settle_panel(
        &mut self,
        round_id: &str,
        deltas: &[StakeDelta],
        decision: Option<Decision>,
        outcome: TallyOutcome,
    ) -> Result<u64, AdjudicationError> {
        let params = self.params;
        let round = self.round(round_id)?.clone();
        for juror in &round.panel {
            let a = self.registry.get_mut(juror)?;
            a.locked_stake -= round.stake_lock;
            a.free_stake += round.stake_lock;
        }
        let mut insurer_credit = 0u64;
        for d in deltas {
            match &d.account {
                Account::Adjuster(id) => {
                    let a = self.registry.get_mut(id)?;
                    a.free_stake = a
                        .free_stake
                        .checked_add_signed(d.delta)
                        .expect("slash never exceeds the unlocked stake");
                }
                Account::InsurerPool => insurer_credit += d.delta as u64,
            }
        }
        if let Some(decision) = decision {
            for (juror, status) in round.juror_statuses() {
                let a = self.registry.get_mut(&juror)?;
                match status {
                    JurorStatus::Revealed(v) if coherent(&v, &decision, &params) => a.coherent_count += 1,
                    _ => a.incoherent_count += 1,
                }
            }
        }
        self.round_mut(round_id)?.finalize(outcome, deltas.to_vec());
        Ok(insurer_credit)
    }

    /// Free plus locked stake across the pool.
    pub fn total_stake(&self) -> u128 {
        self.registry.total_stake()
    }

    /// Fee escrow held by rounds that have not finalized.
    pub fn escrowed_fees(&self) -> u128 {
        self.rounds
            .values()
            .filter(|r| r.phase != Phase::Finalized)
            .map(|r| u128::from(r.fee_escrow))
            .sum()
    }

    /// Every token held by the engine.
    pub fn holdings(&self) -> u128 {
        self.total_stake() + self.escrowed_fees()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine(n: usize, params: AdjudicationParams) -> AdjudicationEngine {
        let mut e = AdjudicationEngine::new(params).unwrap();
        for _ in 0..n {
            e.register_adjuster("cert", 1000).unwrap();
        }
        e
    }

    fn vote(validity: bool, amount: u64, salt: u8) -> Vote {
        Vote { validity, amount, salt: [salt; 32] }
    }

    fn play(e: &mut AdjudicationEngine, round_id: &str, votes: &[Option<(bool, u64)>]) -> Finalization {
        let panel = e.round(round_id).unwrap().panel.clone();
        for (i, (a, v)) in panel.iter().zip(votes).enumerate() {
            if let Some((ok, amt)) = v {
                e.commit(round_id, a, vote(*ok, *amt, i as u8).commitment(round_id, a)).unwrap();
            }
        }
        if e.round(round_id).unwrap().phase == Phase::Commit {
            e.close_commits(round_id).unwrap();
        }
        for (i, (a, v)) in panel.iter().zip(votes).enumerate() {
            if let Some((ok, amt)) = v {
                e.reveal(round_id, a, vote(*ok, *amt, i as u8)).unwrap();
            }
        }
        e.finalize(round_id).unwrap()
    }

    #[test]
    fn opening_locks_stake_and_finalizing_releases_it() {
        let mut e = engine(5, AdjudicationParams::default());
        let before = e.holdings();
        let r = e.open_round("c1", 50).unwrap();
        assert_eq!(e.holdings(), before + 50);
        let locked: u64 = e.registry().iter().map(|a| a.locked_stake).sum();
        assert_eq!(locked, 300);
        let fin = play(&mut e, &r, &[Some((true, 1000)), Some((true, 1000)), Some((false, 0))]);
        assert_eq!(fin.outcome, FinalOutcome::Decided { decision: Decision { validity: true, amount: 1000 }, defaulted: false });
        assert_eq!(e.registry().iter().map(|a| a.locked_stake).sum::<u64>(), 0);
        assert_eq!(fin.insurer_credit, 0);
        // fee left escrow and went to the two coherent jurors
        assert_eq!(e.holdings(), before + 50);
        let coherent: u64 = e.registry().iter().map(|a| a.coherent_count).sum();
        assert_eq!(coherent, 2);
    }

    #[test]
    fn tie_escalates_to_a_wider_panel() {
        let mut e = engine(9, AdjudicationParams::default());
        let r0 = e.open_round("c", 50).unwrap();
        let fin = play(&mut e, &r0, &[Some((true, 10)), None, Some((false, 0))]);
        let FinalOutcome::Escalated { next_round } = fin.outcome else { panic!("expected escalation") };
        assert_eq!(next_round, "c-r1");
        assert_eq!(e.round(&next_round).unwrap().panel.len(), 7);
        assert_eq!(e.round(&next_round).unwrap().fee_escrow, 50);
        let fin = play(&mut e, &next_round, &[Some((true, 10)); 7]);
        assert!(matches!(fin.outcome, FinalOutcome::Decided { decision: Decision { validity: true, amount: 10 }, .. }));
        assert_eq!(e.escrowed_fees(), 0);
    }

    #[test]
    fn escalation_without_enough_adjusters_defaults_to_denied() {
        let mut e = engine(3, AdjudicationParams::default());
        let r0 = e.open_round("c", 50).unwrap();
        let fin = play(&mut e, &r0, &[None, None, None]);
        assert_eq!(fin.outcome, FinalOutcome::Decided { decision: Decision::DENIED, defaulted: true });
        // three absent jurors slashed 50 each, nobody coherent, fee refunded
        assert_eq!(fin.insurer_credit, 150 + 50);
    }

    #[test]
    fn finalize_requires_complete_reveals() {
        let mut e = engine(3, AdjudicationParams::default());
        let r = e.open_round("c", 0).unwrap();
        assert!(matches!(e.finalize(&r), Err(AdjudicationError::WrongPhase { .. })));
        let panel = e.round(&r).unwrap().panel.clone();
        for (i, a) in panel.iter().enumerate() {
            e.commit(&r, a, vote(true, 5, i as u8).commitment(&r, a)).unwrap();
        }
        e.reveal(&r, &panel[0], vote(true, 5, 0)).unwrap();
        assert_eq!(e.finalize(&r).unwrap_err(), AdjudicationError::RevealIncomplete(2));
        e.close_reveals(&r).unwrap();
        assert!(e.finalize(&r).is_ok());
        assert!(matches!(e.finalize(&r), Err(AdjudicationError::WrongPhase { .. })));
        assert!(matches!(e.open_round("c", 0), Err(AdjudicationError::RoundExists(_))));
    }

    #[test]
    fn engine_state_serializes() {
        let mut e = engine(3, AdjudicationParams::default());
        e.open_round("c", 10).unwrap();
        let json = serde_json::to_string(&e).unwrap();
        let back: AdjudicationEngine = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
    }
}
