use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{juror_delta, SimConfig, StrategyProfile};
use crate::adjudication::{AdjusterId, Decision, StakeDelta};
use crate::claims::ClaimsState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyStats {
    pub adjusters: u32,
    /// Panel seats held across all rounds.
    pub seats: u64,
    /// Mean stake delta per seat, fees included.
    pub mean_stake_delta: f64,
    /// Mean stake per adjuster at the end of the run.
    pub mean_final_stake: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub claim_count: u32,
    pub seed: u64,
    /// Fraction of claims whose decided validity matches ground truth.
    pub decision_accuracy: f64,
    /// Mean absolute error of the assessed amount, taking the true amount
    /// of an invalid claim and the assessed amount of a denial as zero.
    pub amount_mae: f64,
    /// Fraction of claims that needed at least one escalation.
    pub escalation_rate: f64,
    pub approved: u64,
    pub denied: u64,
    pub defaulted: u64,
    pub rejected_evidence: u64,
    pub unadjudicated: u64,
    pub rounds: u64,
    pub round_invariant_violations: u64,
    pub total_payout: u64,
    pub strategies: BTreeMap<String, StrategyStats>,
    pub token_supply_initial: u64,
    pub token_supply_final: u64,
    pub token_supply_drift: i64,
}

impl SimMetrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct") + "\n"
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "claims              {}", self.claim_count);
        let _ = writeln!(s, "seed                {}", self.seed);
        let _ = writeln!(s, "decision accuracy   {:.4}", self.decision_accuracy);
        let _ = writeln!(s, "amount MAE          {:.2}", self.amount_mae);
        let _ = writeln!(s, "escalation rate     {:.4}", self.escalation_rate);
        let _ = writeln!(
            s,
            "approved/denied     {}/{} (defaulted {})",
            self.approved, self.denied, self.defaulted
        );
        let _ = writeln!(s, "rounds              {}", self.rounds);
        let _ = writeln!(s, "total payout        {}", self.total_payout);
        let _ = writeln!(
            s,
            "token supply        {} -> {} (drift {})",
            self.token_supply_initial, self.token_supply_final, self.token_supply_drift
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<20} {:>9} {:>8} {:>16} {:>12}", "strategy", "adjusters", "seats", "mean delta/seat", "final stake");
        for (label, st) in &self.strategies {
            let _ = writeln!(
                s,
                "{:<20} {:>9} {:>8} {:>16.3} {:>12.1}",
                label, st.adjusters, st.seats, st.mean_stake_delta, st.mean_final_stake
            );
        }
        s
    }
}

pub(super) struct Tally<'a> {
    roster: &'a BTreeMap<AdjusterId, String>,
    adjusters: BTreeMap<String, u32>,
    seats: BTreeMap<String, (u64, i64)>,
    claims: u64,
    correct: u64,
    abs_error: u128,
    pub approved: u64,
    pub denied: u64,
    pub defaulted: u64,
    pub escalated: u64,
    pub rejected_evidence: u64,
    pub unadjudicated: u64,
    rounds: u64,
    violations: u64,
    pub total_payout: u64,
}

impl<'a> Tally<'a> {
    pub(super) fn new(profiles: &[StrategyProfile], roster: &'a BTreeMap<AdjusterId, String>) -> Self {
        let mut adjusters = BTreeMap::new();
        let mut seats = BTreeMap::new();
        for p in profiles {
            *adjusters.entry(p.label()).or_default() += p.population_count;
            seats.entry(p.label()).or_insert((0, 0));
        }
        Self {
            roster,
            adjusters,
            seats,
            claims: 0,
            correct: 0,
            abs_error: 0,
            approved: 0,
            denied: 0,
            defaulted: 0,
            escalated: 0,
            rejected_evidence: 0,
            unadjudicated: 0,
            rounds: 0,
            violations: 0,
            total_payout: 0,
        }
    }

    pub(super) fn round(&mut self, panel: &[AdjusterId], deltas: &[StakeDelta], balanced: bool) {
        self.rounds += 1;
        self.violations += u64::from(!balanced);
        for juror in panel {
            let entry = self.seats.get_mut(&self.roster[juror]).expect("label registered");
            entry.0 += 1;
            entry.1 += juror_delta(deltas, juror);
        }
    }

    pub(super) fn decide(&mut self, valid: bool, damage: u64, decision: Decision) {
        self.claims += 1;
        self.correct += u64::from(decision.validity == valid);
        let truth = if valid { damage } else { 0 };
        let assessed = if decision.validity { decision.amount } else { 0 };
        self.abs_error += u128::from(truth.abs_diff(assessed));
        if decision.validity {
            self.approved += 1;
        } else {
            self.denied += 1;
        }
    }

    pub(super) fn finish(self, config: &SimConfig, state: &ClaimsState, initial: u128, final_: u128) -> SimMetrics {
        let n = self.claims.max(1) as f64;
        let mut stakes: BTreeMap<&str, u128> = BTreeMap::new();
        for a in state.adjudication.registry().iter() {
            *stakes.entry(self.roster[&a.adjuster_id].as_str()).or_default() += u128::from(a.total_stake());
        }
        let strategies = self
            .seats
            .iter()
            .map(|(label, &(seats, sum))| {
                let count = self.adjusters[label];
                let stats = StrategyStats {
                    adjusters: count,
                    seats,
                    mean_stake_delta: if seats > 0 { sum as f64 / seats as f64 } else { 0.0 },
                    mean_final_stake: stakes.get(label.as_str()).copied().unwrap_or(0) as f64 / f64::from(count.max(1)),
                };
                (label.clone(), stats)
            })
            .collect();
        SimMetrics {
            claim_count: config.claim_count,
            seed: config.seed,
            decision_accuracy: self.correct as f64 / n,
            amount_mae: self.abs_error as f64 / n,
            escalation_rate: self.escalated as f64 / n,
            approved: self.approved,
            denied: self.denied,
            defaulted: self.defaulted,
            rejected_evidence: self.rejected_evidence,
            unadjudicated: self.unadjudicated,
            rounds: self.rounds,
            round_invariant_violations: self.violations,
            total_payout: self.total_payout,
            strategies,
            token_supply_initial: initial as u64,
            token_supply_final: final_ as u64,
            token_supply_drift: (final_ as i128 - initial as i128) as i64,
        }
    }
}
