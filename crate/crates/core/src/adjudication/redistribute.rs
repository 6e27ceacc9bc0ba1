use serde::{Deserialize, Serialize};

use super::round::AdjudicationRound;
use super::{Account, AdjudicationParams, AdjusterId, Decision, DeltaReason, StakeDelta, Vote};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JurorStatus {
    Revealed(Vote),
    NoReveal,
}

/// A vote is coherent when it agrees on validity and, for a valid claim,
/// its amount lies within `amount_tolerance * decision.amount` of the
/// decided amount.
pub fn coherent(vote: &Vote, decision: &Decision, params: &AdjudicationParams) -> bool {
    if vote.validity != decision.validity {
        return false;
    }
    if !decision.validity {
        return true;
    }
    let diff = vote.amount.abs_diff(decision.amount) as f64;
    diff <= params.amount_tolerance * decision.amount as f64
}

/// `total` split into `n` integer shares; the first `total % n` get one extra.
fn even_shares(total: u64, n: usize) -> impl Iterator<Item = u64> {
    let n64 = n as u64;
    let (base, rem) = if n == 0 { (0, 0) } else { (total / n64, total % n64) };
    (0..n64).map(move |i| base + u64::from(i < rem))
}

fn credit(deltas: &mut Vec<StakeDelta>, recipients: &[AdjusterId], total: u64, reason: DeltaReason) {
    for (who, share) in recipients.iter().zip(even_shares(total, recipients.len())) {
        if share > 0 {
            deltas.push(StakeDelta {
                account: Account::Adjuster(who.clone()),
                delta: share as i64,
                reason,
            });
        }
    }
}

/// Stake movements for a round that produced `decision`.
///
/// Absent and incoherent jurors each lose `floor(slash_fraction * stake_lock)`.
/// The slashed pool and the round's fee escrow are split evenly among the
/// coherent jurors, remainders going one token at a time in panel order.
/// With no coherent juror the slashed pool goes to the insurer pool and the
/// fee is not paid out.
pub fn redistribute(round: &AdjudicationRound, decision: &Decision, params: &AdjudicationParams) -> Vec<StakeDelta> {
    let slash = params.slash_amount();
    let mut deltas = Vec::new();
    let mut coherent_jurors = Vec::new();
    let mut pool = 0u64;
    for (who, status) in round.juror_statuses() {
        let reason = match status {
            JurorStatus::Revealed(v) if coherent(&v, decision, params) => {
                coherent_jurors.push(who);
                continue;
            }
            JurorStatus::Revealed(_) => DeltaReason::Slash,
            JurorStatus::NoReveal => DeltaReason::NoReveal,
        };
        pool += slash;
        if slash > 0 {
            deltas.push(StakeDelta {
                account: Account::Adjuster(who),
                delta: -(slash as i64),
                reason,
            });
        }
    }
    if coherent_jurors.is_empty() {
        if pool > 0 {
            deltas.push(StakeDelta {
                account: Account::InsurerPool,
                delta: pool as i64,
                reason: DeltaReason::RedistributionShare,
            });
        }
    } else {
        credit(&mut deltas, &coherent_jurors, pool, DeltaReason::RedistributionShare);
        credit(&mut deltas, &coherent_jurors, round.fee_escrow, DeltaReason::FeeShare);
    }
    deltas
}

/// Stake movements for a round that ended in a tie and escalated. Only
/// absence is punished; the slashed pool goes to the jurors who did reveal
/// (or the insurer pool if nobody did). Fees wait for the deciding round.
pub fn redistribute_escalated(round: &AdjudicationRound, params: &AdjudicationParams) -> Vec<StakeDelta> {
    let slash = params.slash_amount();
    let mut deltas = Vec::new();
    let mut revealers = Vec::new();
    let mut pool = 0u64;
    for (who, status) in round.juror_statuses() {
        match status {
            JurorStatus::Revealed(_) => revealers.push(who),
            JurorStatus::NoReveal => {
                pool += slash;
                if slash > 0 {
                    deltas.push(StakeDelta {
                        account: Account::Adjuster(who),
                        delta: -(slash as i64),
                        reason: DeltaReason::NoReveal,
                    });
                }
            }
        }
    }
    if revealers.is_empty() {
        if pool > 0 {
            deltas.push(StakeDelta {
                account: Account::InsurerPool,
                delta: pool as i64,
                reason: DeltaReason::RedistributionShare,
            });
        }
    } else {
        credit(&mut deltas, &revealers, pool, DeltaReason::RedistributionShare);
    }
    deltas
}

/// Sum of every delta except fee shares; zero for any well-formed round.
pub fn slash_total(deltas: &[StakeDelta]) -> i64 {
    deltas
        .iter()
        .filter(|d| d.reason != DeltaReason::FeeShare)
        .map(|d| d.delta)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> AdjudicationParams {
        AdjudicationParams {
            panel_size: 5,
            stake_lock: 100,
            slash_fraction: 0.5,
            fee_pool: 50,
            amount_tolerance: 0.10,
            ..Default::default()
        }
    }

    fn vote(validity: bool, amount: u64) -> Vote {
        Vote { validity, amount, salt: [0; 32] }
    }

    fn round(votes: &[Option<Vote>], fee: u64) -> AdjudicationRound {
        let panel: Vec<AdjusterId> = (0..votes.len()).map(|i| AdjusterId(format!("j{i}"))).collect();
        let mut r = AdjudicationRound::new("r".into(), "c".into(), 0, panel.clone(), 100, fee);
        for (i, v) in votes.iter().enumerate() {
            if let Some(v) = v {
                let v = Vote { salt: [i as u8; 32], ..*v };
                r.commit_vote(&panel[i], v.commitment("r", &panel[i])).unwrap();
            }
        }
        if r.phase == super::super::Phase::Commit {
            r.close_commits().unwrap();
        }
        for (i, v) in votes.iter().enumerate() {
            if let Some(v) = v {
                r.reveal_vote(&panel[i], Vote { salt: [i as u8; 32], ..*v }).unwrap();
            }
        }
        r
    }

    fn per_juror(deltas: &[StakeDelta], reason: DeltaReason) -> Vec<(String, i64)> {
        deltas
            .iter()
            .filter(|d| d.reason == reason)
            .map(|d| match &d.account {
                Account::Adjuster(a) => (a.0.clone(), d.delta),
                Account::InsurerPool => ("insurer".into(), d.delta),
            })
            .collect()
    }

    #[test]
    fn coherence_band() {
        let p = params();
        let d = Decision { validity: true, amount: 3500 };
        assert!(coherent(&vote(true, 3500), &d, &p));
        assert!(coherent(&vote(true, 3850), &d, &p));
        assert!(coherent(&vote(true, 3150), &d, &p));
        assert!(!coherent(&vote(true, 3000), &d, &p));
        assert!(!coherent(&vote(true, 3851), &d, &p));
        assert!(!coherent(&vote(false, 0), &d, &p));
        assert!(coherent(&vote(false, 77), &Decision::DENIED, &p));
        assert!(!coherent(&vote(true, 0), &Decision::DENIED, &p));
    }

    #[test]
    fn three_coherent_two_incoherent() {
        // k=5, S=100, alpha=0.5, F=50
        let r = round(
            &[
                Some(vote(true, 3500)),
                Some(vote(false, 0)),
                Some(vote(true, 3500)),
                Some(vote(true, 3500)),
                Some(vote(false, 0)),
            ],
            50,
        );
        let d = Decision { validity: true, amount: 3500 };
        let deltas = redistribute(&r, &d, &params());
        assert_eq!(per_juror(&deltas, DeltaReason::Slash), vec![("j1".into(), -50), ("j4".into(), -50)]);
        assert_eq!(
            per_juror(&deltas, DeltaReason::RedistributionShare),
            vec![("j0".into(), 34), ("j2".into(), 33), ("j3".into(), 33)]
        );
        assert_eq!(
            per_juror(&deltas, DeltaReason::FeeShare),
            vec![("j0".into(), 17), ("j2".into(), 17), ("j3".into(), 16)]
        );
        assert_eq!(slash_total(&deltas), 0);
    }

    #[test]
    fn all_coherent_only_share_fees() {
        let r = round(&[Some(vote(true, 100)); 3], 50);
        let deltas = redistribute(&r, &Decision { validity: true, amount: 100 }, &params());
        assert!(per_juror(&deltas, DeltaReason::Slash).is_empty());
        assert_eq!(
            per_juror(&deltas, DeltaReason::FeeShare),
            vec![("j0".into(), 17), ("j1".into(), 17), ("j2".into(), 16)]
        );
    }

    #[test]
    fn no_coherent_juror_sends_slashes_to_insurer() {
        let r = round(&[None, None, None], 50);
        let deltas = redistribute(&r, &Decision::DENIED, &params());
        assert_eq!(per_juror(&deltas, DeltaReason::NoReveal).len(), 3);
        assert_eq!(per_juror(&deltas, DeltaReason::RedistributionShare), vec![("insurer".into(), 150)]);
        assert!(per_juror(&deltas, DeltaReason::FeeShare).is_empty());
        assert_eq!(slash_total(&deltas), 0);
    }

    #[test]
    fn escalated_round_pays_revealers() {
        let r = round(&[Some(vote(true, 10)), None, Some(vote(false, 0))], 50);
        let deltas = redistribute_escalated(&r, &params());
        assert_eq!(per_juror(&deltas, DeltaReason::NoReveal), vec![("j1".into(), -50)]);
        assert_eq!(
            per_juror(&deltas, DeltaReason::RedistributionShare),
            vec![("j0".into(), 25), ("j2".into(), 25)]
        );
        assert!(per_juror(&deltas, DeltaReason::FeeShare).is_empty());
    }

    proptest! {
        #[test]
        fn conservation_and_median_self_coherence(
            votes in proptest::collection::vec(proptest::option::weighted(0.8, (any::<bool>(), 0u64..20_000)), 1..=9),
            alpha in 0.01f64..=1.0,
            stake in 1u64..1000,
            fee in 0u64..500,
            tol in 0.0f64..0.99,
        ) {
            let p = AdjudicationParams { stake_lock: stake, slash_fraction: alpha, amount_tolerance: tol, fee_pool: fee, ..params() };
            let r = round(&votes.iter().map(|v| v.map(|(ok, a)| vote(ok, a))).collect::<Vec<_>>(), fee);
            let outcome = crate::adjudication::tally(&r, &p);
            let decision = match outcome {
                crate::adjudication::TallyOutcome::Decided { decision, .. } => decision,
                crate::adjudication::TallyOutcome::Escalate { .. } => {
                    let deltas = redistribute_escalated(&r, &p);
                    prop_assert_eq!(slash_total(&deltas), 0);
                    return Ok(());
                }
            };
            let deltas = redistribute(&r, &decision, &p);
            prop_assert_eq!(slash_total(&deltas), 0);
            let fees: i64 = deltas.iter().filter(|d| d.reason == DeltaReason::FeeShare).map(|d| d.delta).sum();
            prop_assert!(fees == 0 || fees == fee as i64);
            if decision.validity {
                // the juror(s) holding the median are coherent, so fees are always paid
                prop_assert_eq!(fees, fee as i64);
                for (_, v) in r.revealed_votes() {
                    if v.validity && v.amount == decision.amount {
                        prop_assert!(coherent(&v, &decision, &p));
                    }
                }
            }
            for d in &deltas {
                prop_assert!(d.delta >= -(stake as i64));
            }
        }
    }
}
