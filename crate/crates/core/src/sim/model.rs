//! Single-round payoff model: exact expectation by enumeration, and the
//! Monte Carlo estimate it is used to validate.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{SimError, Strategy};
use crate::adjudication::{
    redistribute, redistribute_escalated, tally, Account, AdjudicationParams, AdjudicationRound, AdjusterId,
    TallyOutcome, Vote,
};
use crate::evidence::hash_parts;
use crate::par::Parallelism;

/// Enumeration is refused above this many joint outcomes.
pub const MAX_JOINT_OUTCOMES: u64 = 20_000_000;

/// One panel of `params.panel_size` seats, each filled independently by a
/// strategy drawn from `mix` (weights need not sum to one), judging one
/// claim whose validity is drawn from `validity_prior` and whose true
/// damage is `true_amount`.
///
/// Amounts are discrete so the model can be enumerated: random voters pick
/// uniformly from `random_amounts`, and truthful noise uses the three-point
/// rule `{-sqrt(3), 0, +sqrt(3)}` with weights `{1/6, 2/3, 1/6}`, which
/// matches the mean and variance of a normal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundModel {
    pub params: AdjudicationParams,
    pub validity_prior: f64,
    pub true_amount: u64,
    pub random_amounts: Vec<u64>,
    pub mix: Vec<(String, Strategy, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundExpectation {
    /// Expected stake delta of one seat held by each strategy.
    pub per_strategy: BTreeMap<String, f64>,
    pub escalation_probability: f64,
    /// Probability that a decided round gets validity right.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub seats: u64,
}

type Ballot = Option<(bool, u64)>;

#[derive(Debug, Clone)]
struct SeatOutcome {
    strategy: usize,
    ballot: Ballot,
    prob: f64,
}

impl RoundModel {
    /// `points` amounts spread evenly over `[lo, hi]`.
    pub fn amount_grid(lo: u64, hi: u64, points: usize) -> Vec<u64> {
        match points {
            0 => Vec::new(),
            1 => vec![lo],
            n => (0..n).map(|j| lo + (hi - lo) * j as u64 / (n as u64 - 1)).collect(),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        self.params.validate().map_err(|e| SimError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.validity_prior) {
            return Err(SimError::Config("validity_prior must lie in [0, 1]".into()));
        }
        if self.random_amounts.is_empty() {
            return Err(SimError::Config("random_amounts must not be empty".into()));
        }
        let total: f64 = self.mix.iter().map(|m| m.2).sum();
        if self.mix.is_empty() || total <= 0.0 || self.mix.iter().any(|m| m.2 < 0.0) {
            return Err(SimError::Config("mix needs non-negative weights with a positive sum".into()));
        }
        for (_, s, _) in &self.mix {
            s.validate()?;
        }
        Ok(())
    }

    fn random_ballots(&self) -> Vec<(Ballot, f64)> {
        let n = self.random_amounts.len() as f64;
        let mut out = vec![(Some((false, 0)), 0.5)];
        out.extend(self.random_amounts.iter().map(|&a| (Some((true, a)), 0.5 / n)));
        out
    }

    fn truthful_amounts(&self, noise: f64) -> Vec<(u64, f64)> {
        if noise == 0.0 {
            return vec![(self.true_amount, 1.0)];
        }
        let d = self.true_amount as f64;
        let s = 3f64.sqrt() * noise;
        [(-s, 1.0 / 6.0), (0.0, 2.0 / 3.0), (s, 1.0 / 6.0)]
            .iter()
            .map(|&(z, p)| ((d * (1.0 + z)).round().max(0.0) as u64, p))
            .collect()
    }

    fn ballots(&self, strategy: &Strategy, valid: bool) -> Vec<(Ballot, f64)> {
        match *strategy {
            Strategy::Truthful { accuracy, amount_noise } => {
                let mut out = Vec::new();
                for (vote_valid, p) in [(valid, accuracy), (!valid, 1.0 - accuracy)] {
                    if p == 0.0 {
                        continue;
                    }
                    if vote_valid {
                        out.extend(self.truthful_amounts(amount_noise).into_iter().map(|(a, q)| (Some((true, a)), p * q)));
                    } else {
                        out.push((Some((false, 0)), p));
                    }
                }
                out
            }
            Strategy::UniformRandom => self.random_ballots(),
            Strategy::Adversarial { validity, amount } => vec![(Some((validity, if validity { amount } else { 0 })), 1.0)],
            Strategy::Lazy { no_reveal_probability: q } => {
                let mut out: Vec<_> = self.random_ballots().into_iter().map(|(b, p)| (b, p * (1.0 - q))).collect();
                out.push((None, q));
                out.retain(|o| o.1 > 0.0);
                out
            }
        }
    }

    fn seat_outcomes(&self, valid: bool) -> Vec<SeatOutcome> {
        let total: f64 = self.mix.iter().map(|m| m.2).sum();
        let mut out = Vec::new();
        for (i, (_, strategy, w)) in self.mix.iter().enumerate() {
            for (ballot, p) in self.ballots(strategy, valid) {
                out.push(SeatOutcome {
                    strategy: i,
                    ballot,
                    prob: w / total * p,
                });
            }
        }
        out
    }

    fn panel(&self) -> Vec<AdjusterId> {
        (0..self.params.panel_size).map(|j| AdjusterId(format!("seat-{j}"))).collect()
    }

    /// Per-seat stake deltas and the decided validity (None on escalation).
    fn evaluate(&self, panel: &[AdjusterId], ballots: &[Ballot]) -> (Vec<i64>, Option<bool>) {
        let votes: Vec<Option<Vote>> = ballots
            .iter()
            .map(|b| b.map(|(validity, amount)| Vote { validity, amount, salt: [0; 32] }))
            .collect();
        let round = AdjudicationRound::with_reveals(
            "model".into(),
            panel.to_vec(),
            &votes,
            self.params.stake_lock,
            self.params.fee_pool,
        );
        let (deltas, decided) = match tally(&round, &self.params) {
            TallyOutcome::Decided { decision, .. } => {
                (redistribute(&round, &decision, &self.params), Some(decision.validity))
            }
            TallyOutcome::Escalate { .. } => (redistribute_escalated(&round, &self.params), None),
        };
        let mut per_seat = vec![0i64; panel.len()];
        for d in deltas {
            if let Account::Adjuster(id) = d.account {
                let j = panel.iter().position(|p| *p == id).expect("delta for a panelist");
                per_seat[j] += d.delta;
            }
        }
        (per_seat, decided)
    }

    fn labels(&self) -> Vec<String> {
        self.mix.iter().map(|m| m.0.clone()).collect()
    }
}

/// Exact per-strategy expected stake delta over every joint outcome of
/// claim validity and the panel's ballots.
pub fn brute_force_round_expectation(model: &RoundModel) -> Result<RoundExpectation, SimError> {
    model.validate()?;
    let k = model.params.panel_size as usize;
    let panel = model.panel();
    let labels = model.labels();
    let mut sum = vec![0f64; labels.len()];
    let mut weight = vec![0f64; labels.len()];
    let mut p_escalate = 0.0;
    let mut p_correct = 0.0;
    for (valid, p_truth) in [(true, model.validity_prior), (false, 1.0 - model.validity_prior)] {
        if p_truth == 0.0 {
            continue;
        }
        let outcomes = model.seat_outcomes(valid);
        let n = outcomes.len();
        if (n as u64).checked_pow(k as u32).is_none_or(|c| c > MAX_JOINT_OUTCOMES) {
            return Err(SimError::Config(format!("{n}^{k} joint outcomes is too many to enumerate")));
        }
        // odometer over k seats
        let mut idx = vec![0usize; k];
        let mut ballots = vec![None; k];
        loop {
            let mut p = p_truth;
            for (j, &i) in idx.iter().enumerate() {
                p *= outcomes[i].prob;
                ballots[j] = outcomes[i].ballot;
            }
            let (deltas, decided) = model.evaluate(&panel, &ballots);
            for (j, &i) in idx.iter().enumerate() {
                let s = outcomes[i].strategy;
                sum[s] += p * deltas[j] as f64;
                weight[s] += p;
            }
            match decided {
                None => p_escalate += p,
                Some(v) if v == valid => p_correct += p,
                Some(_) => {}
            }
            let mut j = 0;
            while j < k {
                idx[j] += 1;
                if idx[j] < n {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == k {
                break;
            }
        }
    }
    let per_strategy = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, if weight[i] > 0.0 { sum[i] / weight[i] } else { 0.0 }))
        .collect();
    let decided = 1.0 - p_escalate;
    Ok(RoundExpectation {
        per_strategy,
        escalation_probability: p_escalate,
        accuracy: if decided > 0.0 { p_correct / decided } else { 0.0 },
    })
}

fn pick<'a>(outcomes: &'a [SeatOutcome], rng: &mut ChaCha20Rng) -> &'a SeatOutcome {
    let total: f64 = outcomes.iter().map(|o| o.prob).sum();
    let mut x = rng.gen::<f64>() * total;
    for o in outcomes {
        if x < o.prob {
            return o;
        }
        x -= o.prob;
    }
    outcomes.last().expect("non-empty outcomes")
}

/// Samples `rounds` independent rounds and estimates each strategy's mean
/// per-seat stake delta. The standard error treats rounds as clusters,
/// since seats within one round are correlated.
pub fn monte_carlo_round_means(
    model: &RoundModel,
    rounds: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<BTreeMap<String, McEstimate>, SimError> {
    model.validate()?;
    let labels = model.labels();
    let panel = model.panel();
    let valid_outcomes = model.seat_outcomes(true);
    let invalid_outcomes = model.seat_outcomes(false);
    // per round: (delta sum, seat count) for each strategy
    let per_round: Vec<Vec<(f64, f64)>> = parallelism.map_range(rounds, |r| {
        let digest = hash_parts(&[b"tamperproof.sim.mc", &seed.to_be_bytes(), &(r as u64).to_be_bytes()]).digest;
        let mut rng = ChaCha20Rng::from_seed(digest);
        let valid = rng.gen_bool(model.validity_prior);
        let outcomes = if valid { &valid_outcomes } else { &invalid_outcomes };
        let seats: Vec<&SeatOutcome> = (0..panel.len()).map(|_| pick(outcomes, &mut rng)).collect();
        let ballots: Vec<Ballot> = seats.iter().map(|s| s.ballot).collect();
        let (deltas, _) = model.evaluate(&panel, &ballots);
        let mut acc = vec![(0.0, 0.0); labels.len()];
        for (seat, d) in seats.iter().zip(deltas) {
            acc[seat.strategy].0 += d as f64;
            acc[seat.strategy].1 += 1.0;
        }
        acc
    });
    let n = per_round.len() as f64;
    let mut out = BTreeMap::new();
    for (i, label) in labels.into_iter().enumerate() {
        let total: f64 = per_round.iter().map(|r| r[i].0).sum();
        let count: f64 = per_round.iter().map(|r| r[i].1).sum();
        let mean = if count > 0.0 { total / count } else { 0.0 };
        // linearized variance of a ratio estimator
        let resid: f64 = per_round.iter().map(|r| (r[i].0 - mean * r[i].1).powi(2)).sum();
        let se = if count > 0.0 && n > 1.0 {
            (n / (n - 1.0) * resid).sqrt() / count
        } else {
            f64::INFINITY
        };
        out.insert(label, McEstimate { mean, standard_error: se, seats: count as u64 });
    }
    Ok(out)
}
