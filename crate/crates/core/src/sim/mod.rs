//! Agent-based simulation: many claims run end to end through the real
//! pipeline, ledgers, claims engine and adjudication engine, with adjusters
//! following configurable voting strategies.

mod metrics;
mod model;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{SimMetrics, StrategyStats};
pub use model::{brute_force_round_expectation, monte_carlo_round_means, McEstimate, RoundExpectation, RoundModel};

use crate::adjudication::{
    Account, AdjudicationEngine, AdjudicationError, AdjudicationParams, AdjusterId, Decision, DeltaReason,
    FinalOutcome, Phase, StakeDelta, Vote,
};
use crate::claims::{ClaimError, ClaimState, ClaimsEngine, ClaimsState, Policy};
use crate::evidence::{hash_parts, MediaKind, ObjectStore};
use crate::ledger::{DualLedger, LedgerError, CHAIN_FILE};
use crate::par::Parallelism;
use crate::pipeline::{MediaLocator, Pipeline, PipelineConfig, PipelineError, RawCapture};
use crate::time::{Clock, LogicalClock, Timestamp};

pub const METRICS_FILE: &str = "metrics.json";
pub const AUDIT_FILE: &str = "audit.jsonl";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Claims(#[from] ClaimError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Adjudication(#[from] AdjudicationError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// How an adjuster votes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Gets validity right with probability `accuracy`; amounts carry
    /// relative normal noise with standard deviation `amount_noise`.
    Truthful {
        accuracy: f64,
        #[serde(default)]
        amount_noise: f64,
    },
    /// Fair coin on validity, amount uniform over the damage range.
    UniformRandom,
    /// Always casts the same vote.
    Adversarial { validity: bool, amount: u64 },
    /// Commits but skips the reveal with probability
    /// `no_reveal_probability`; otherwise votes like `UniformRandom`.
    Lazy { no_reveal_probability: f64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Truthful { .. } => "truthful",
            Strategy::UniformRandom => "uniform_random",
            Strategy::Adversarial { .. } => "adversarial",
            Strategy::Lazy { .. } => "lazy",
        }
    }

    pub(crate) fn validate(&self) -> Result<(), SimError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        match *self {
            Strategy::Truthful { accuracy, amount_noise } if !unit(accuracy) || amount_noise.is_nan() || amount_noise < 0.0 => {
                Err(SimError::Config(format!("bad truthful strategy {self:?}")))
            }
            Strategy::Lazy { no_reveal_probability } if !unit(no_reveal_probability) => {
                Err(SimError::Config(format!("bad lazy strategy {self:?}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub strategy: Strategy,
    pub population_count: u32,
    /// Name used in metrics; defaults to the strategy kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl StrategyProfile {
    pub fn new(strategy: Strategy, population_count: u32) -> Self {
        Self {
            strategy,
            population_count,
            label: None,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.strategy.name().to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub claim_count: u32,
    /// Master seed. Also determines the panel-selection seed, overriding
    /// `params.rng_seed`.
    pub seed: u64,
    /// Probability that a claim is genuine.
    pub validity_prior: f64,
    /// True damage is uniform over `[damage_min, damage_max]`.
    pub damage_min: u64,
    pub damage_max: u64,
    pub coverage_limit: u64,
    pub deductible: u64,
    pub insurer_pool: u64,
    pub initial_stake: u64,
    pub media_bytes: usize,
    /// Seal a block after this many claims.
    pub seal_every: u32,
    pub params: AdjudicationParams,
    pub strategies: Vec<StrategyProfile>,
    pub parallelism: Parallelism,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            claim_count: 1_000,
            seed: 1,
            validity_prior: 0.7,
            damage_min: 1_000,
            damage_max: 10_000,
            coverage_limit: 10_000,
            deductible: 500,
            insurer_pool: 100_000_000,
            initial_stake: 1_000,
            media_bytes: 512,
            seal_every: 100,
            params: AdjudicationParams::default(),
            strategies: vec![
                StrategyProfile::new(Strategy::Truthful { accuracy: 0.9, amount_noise: 0.03 }, 14),
                StrategyProfile::new(Strategy::UniformRandom, 6),
            ],
            parallelism: Parallelism::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    /// Reads TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn population(&self) -> u32 {
        self.strategies.iter().map(|s| s.population_count).sum()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate().map_err(|e| SimError::Config(e.to_string()))?;
        if self.population() < self.params.panel_size {
            return Err(SimError::Config(format!(
                "panel size {} exceeds adjuster population {}",
                self.params.panel_size,
                self.population()
            )));
        }
        if !(0.0..=1.0).contains(&self.validity_prior) {
            return Err(SimError::Config("validity_prior must lie in [0, 1]".into()));
        }
        if self.damage_min > self.damage_max {
            return Err(SimError::Config("damage_min exceeds damage_max".into()));
        }
        if self.deductible > self.coverage_limit {
            return Err(SimError::Config("deductible exceeds coverage_limit".into()));
        }
        if self.initial_stake < self.params.stake_lock {
            return Err(SimError::Config("initial_stake is below the stake lock".into()));
        }
        for s in &self.strategies {
            s.strategy.validate()?;
        }
        Ok(())
    }
}

/// Ground truth for one simulated claim.
#[derive(Debug, Clone)]
struct Scenario {
    seed: [u8; 32],
    valid: bool,
    damage: u64,
    media: Vec<u8>,
}

fn claim_seed(master: u64, index: u32) -> [u8; 32] {
    hash_parts(&[b"tamperproof.sim.claim", &master.to_be_bytes(), &index.to_be_bytes()]).digest
}

fn scenario(config: &SimConfig, index: u32) -> Scenario {
    let seed = claim_seed(config.seed, index);
    let mut rng = ChaCha20Rng::from_seed(seed);
    let valid = rng.gen_bool(config.validity_prior);
    let damage = rng.gen_range(config.damage_min..=config.damage_max);
    let mut media = vec![0u8; config.media_bytes];
    rng.fill(media.as_mut_slice());
    Scenario {
        seed,
        valid,
        damage,
        media,
    }
}

/// The ballot `strategy` casts, or `None` for a skipped reveal.
fn cast(strategy: &Strategy, config: &SimConfig, truth: &Scenario, rng: &mut ChaCha20Rng) -> Option<(bool, u64)> {
    let random = |rng: &mut ChaCha20Rng| {
        if rng.gen_bool(0.5) {
            (true, rng.gen_range(config.damage_min..=config.damage_max))
        } else {
            (false, 0)
        }
    };
    match *strategy {
        Strategy::Truthful { accuracy, amount_noise } => {
            let validity = if rng.gen_bool(accuracy) { truth.valid } else { !truth.valid };
            if !validity {
                return Some((false, 0));
            }
            let factor = if amount_noise > 0.0 {
                1.0 + Normal::new(0.0, amount_noise).expect("finite sigma").sample(rng)
            } else {
                1.0
            };
            Some((true, (truth.damage as f64 * factor).round().max(0.0) as u64))
        }
        Strategy::UniformRandom => Some(random(rng)),
        Strategy::Adversarial { validity, amount } => Some((validity, if validity { amount } else { 0 })),
        Strategy::Lazy { no_reveal_probability } => {
            if rng.gen_bool(no_reveal_probability) {
                None
            } else {
                Some(random(rng))
            }
        }
    }
}

/// Per-round invariant: non-fee deltas cancel and fee shares are all or
/// nothing of the escrow.
pub fn round_deltas_balanced(deltas: &[StakeDelta], fee_escrow: u64) -> bool {
    let non_fee: i64 = deltas.iter().filter(|d| d.reason != DeltaReason::FeeShare).map(|d| d.delta).sum();
    let fees: i64 = deltas.iter().filter(|d| d.reason == DeltaReason::FeeShare).map(|d| d.delta).sum();
    non_fee == 0 && (fees == 0 || fees as u64 == fee_escrow)
}

/// Everything a run produces.
pub struct SimRun {
    pub metrics: SimMetrics,
    pub state: ClaimsState,
    /// Strategy label of every adjuster.
    pub roster: BTreeMap<AdjusterId, String>,
}

pub fn run_simulation(config: &SimConfig) -> Result<SimMetrics, SimError> {
    Ok(run_simulation_in(config, None)?.metrics)
}

/// Runs the simulation; with `out_dir` the ledgers, audit log and
/// `metrics.json` are written there. The directory must not already hold
/// a ledger.
pub fn run_simulation_in(config: &SimConfig, out_dir: Option<&Path>) -> Result<SimRun, SimError> {
    config.validate()?;
    let ledger = match out_dir {
        Some(dir) => {
            if dir.join(CHAIN_FILE).exists() {
                return Err(SimError::Config(format!("{} already holds a ledger", dir.display())));
            }
            DualLedger::open_dir(dir)?
        }
        None => DualLedger::in_memory(),
    };
    let ledger = Arc::new(ledger);
    let store = Arc::new(ObjectStore::in_memory());
    let clock: Arc<dyn Clock> = Arc::new(LogicalClock::with_step(Timestamp::from_millis(1_704_067_200_000), 1_000));
    let pipeline = Pipeline::new(
        store.clone(),
        ledger.clone(),
        clock.clone(),
        PipelineConfig {
            key_seed: config.seed.to_be_bytes().to_vec(),
            ..PipelineConfig::default()
        },
    );

    let mut params = config.params;
    params.rng_seed = hash_parts(&[b"tamperproof.sim.panel", &config.seed.to_be_bytes()]).digest;
    let mut adjudication = AdjudicationEngine::new(params)?;
    let mut roster = BTreeMap::new();
    let mut strategy_of = BTreeMap::new();
    for profile in &config.strategies {
        for _ in 0..profile.population_count {
            let id = adjudication.register_adjuster("sim-certified", config.initial_stake)?;
            roster.insert(id.clone(), profile.label());
            strategy_of.insert(id, profile.strategy);
        }
    }
    let mut claims = ClaimsEngine::new(
        ClaimsState::new(adjudication, config.insurer_pool),
        store,
        ledger.clone(),
        clock.clone(),
    )
    .with_parallelism(config.parallelism);
    if let Some(dir) = out_dir {
        claims = claims.with_audit_log(dir.join(AUDIT_FILE))?;
    }
    claims.add_policy(Policy {
        policy_id: "pol-sim".into(),
        holder: "policyholder".into(),
        coverage_limit: config.coverage_limit,
        deductible: config.deductible,
        active: true,
    })?;

    let initial_supply = claims.state().total_supply();
    let scenarios = config.parallelism.map_range(config.claim_count as usize, |i| scenario(config, i as u32));
    let mut tally = metrics::Tally::new(&config.strategies, &roster);

    for (i, truth) in scenarios.iter().enumerate() {
        let meta = RawCapture {
            device_id: format!("vehicle-{}", i % 50),
            captured_at: clock.now(),
            location: None,
            media_kind: MediaKind::Video,
            witness: false,
        };
        let event = pipeline.stamp(format!("c{i:06}"), MediaLocator::Inline(truth.media.clone()), meta);
        let evidence_id = event.evidence_id().map_err(|e| SimError::Config(e.to_string()))?;
        pipeline.enqueue_capture(event)?;
        pipeline.drain()?;

        let claim_id = claims.submit_claim("pol-sim", vec![evidence_id])?.claim_id;
        if claims.verify_evidence(&claim_id)?.state != ClaimState::EvidenceVerified {
            tally.rejected_evidence += 1;
            tally.decide(truth.valid, truth.damage, Decision::DENIED);
            continue;
        }
        match claims.open_adjudication(&claim_id) {
            Ok(_) => {}
            Err(ClaimError::Adjudication(AdjudicationError::InsufficientPool { .. })) => {
                tally.unadjudicated += 1;
                tally.decide(truth.valid, truth.damage, Decision::DENIED);
                continue;
            }
            Err(e) => return Err(e.into()),
        }
        let mut escalated = false;
        let (decision, defaulted) = loop {
            let round_id = claims.current_round(&claim_id)?;
            vote_round(&mut claims, &round_id, config, truth, &strategy_of)?;
            let fee_escrow = claims.adjudication().round(&round_id)?.fee_escrow;
            let panel = claims.adjudication().round(&round_id)?.panel.clone();
            let fin = claims.finalize_adjudication(&claim_id)?;
            tally.round(&panel, &fin.deltas, round_deltas_balanced(&fin.deltas, fee_escrow));
            match fin.outcome {
                FinalOutcome::Escalated { .. } => escalated = true,
                FinalOutcome::Decided { decision, defaulted } => break (decision, defaulted),
            }
        };
        tally.escalated += u64::from(escalated);
        tally.defaulted += u64::from(defaulted);
        tally.decide(truth.valid, truth.damage, decision);
        if decision.validity {
            if let Some(t) = claims.settle(&claim_id)? {
                tally.total_payout += t.amount;
            }
        }
        if (i + 1) % config.seal_every.max(1) as usize == 0 && !ledger.chain().pending().is_empty() {
            ledger.chain_mut().seal_block(clock.now())?;
        }
    }
    if !ledger.chain().pending().is_empty() {
        ledger.chain_mut().seal_block(clock.now())?;
    }

    let state = claims.into_state();
    let final_supply = state.total_supply();
    let metrics = tally.finish(config, &state, initial_supply, final_supply);
    if let Some(dir) = out_dir {
        std::fs::write(dir.join(METRICS_FILE), metrics.to_json())?;
    }
    Ok(SimRun { metrics, state, roster })
}

fn vote_round(
    claims: &mut ClaimsEngine,
    round_id: &str,
    config: &SimConfig,
    truth: &Scenario,
    strategy_of: &BTreeMap<AdjusterId, Strategy>,
) -> Result<(), SimError> {
    let panel = claims.adjudication().round(round_id)?.panel.clone();
    let mut reveals = Vec::new();
    let adj = claims.adjudication_mut();
    for juror in &panel {
        let digest = hash_parts(&[b"tamperproof.sim.vote", &truth.seed, round_id.as_bytes(), juror.0.as_bytes()]).digest;
        let mut rng = ChaCha20Rng::from_seed(digest);
        let ballot = cast(&strategy_of[juror], config, truth, &mut rng);
        let (validity, amount) = ballot.unwrap_or((false, 0));
        let vote = Vote {
            validity,
            amount,
            salt: rng.gen(),
        };
        adj.commit(round_id, juror, vote.commitment(round_id, juror))?;
        if ballot.is_some() {
            reveals.push((juror.clone(), vote));
        }
    }
    debug_assert_eq!(adj.round(round_id)?.phase, Phase::Reveal);
    for (juror, vote) in &reveals {
        adj.reveal(round_id, juror, *vote)?;
    }
    if reveals.len() < panel.len() {
        adj.close_reveals(round_id)?;
    }
    Ok(())
}

/// Runs `base` once per adversarial fraction, turning that share of the
/// population into `adversary` (taken from the truthful profiles first).
pub fn adversarial_sweep(
    base: &SimConfig,
    fractions: &[f64],
    adversary: Strategy,
) -> Result<Vec<(f64, SimMetrics)>, SimError> {
    let configs: Vec<SimConfig> = fractions.iter().map(|&f| with_adversaries(base, f, adversary)).collect();
    let runs = base.parallelism.map(&configs, run_simulation);
    fractions.iter().zip(runs).map(|(&f, r)| r.map(|m| (f, m))).collect()
}

fn with_adversaries(base: &SimConfig, fraction: f64, adversary: Strategy) -> SimConfig {
    let mut config = base.clone();
    let mut need = (fraction * base.population() as f64).round() as u32;
    let total = need;
    let mut order: Vec<usize> = (0..config.strategies.len()).collect();
    order.sort_by_key(|&i| !matches!(config.strategies[i].strategy, Strategy::Truthful { .. }));
    for i in order {
        let take = need.min(config.strategies[i].population_count);
        config.strategies[i].population_count -= take;
        need -= take;
    }
    config.strategies.retain(|s| s.population_count > 0);
    if total > 0 {
        config.strategies.push(StrategyProfile::new(adversary, total));
    }
    config
}

/// Stake delta attributed to `juror` by `deltas`.
pub(crate) fn juror_delta(deltas: &[StakeDelta], juror: &AdjusterId) -> i64 {
    deltas
        .iter()
        .filter(|d| matches!(&d.account, Account::Adjuster(a) if a == juror))
        .map(|d| d.delta)
        .sum()
}
