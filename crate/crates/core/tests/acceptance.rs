//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use tamperproof::adjudication::{
    AdjudicationEngine, AdjudicationParams, Decision, DeltaReason, Phase, Vote,
};
use tamperproof::claims::{ClaimState, ClaimsEngine, ClaimsState, Policy, INSURER_POOL};
use tamperproof::evidence::{storage_locator, EvidenceId, MediaKind, ObjectStore};
use tamperproof::ledger::{
    AnchorChain, AnchorRecord, DualLedger, MerkleProof, Side, Verdict, CHAIN_FILE, PRIVATE_FILE,
};
use tamperproof::pipeline::{
    evidence_id_for, CaptureEvent, FaultPlan, MediaLocator, Pipeline, PipelineConfig, RawCapture, Stage,
};
use tamperproof::sim::{
    brute_force_round_expectation, monte_carlo_round_means, run_simulation, run_simulation_in, RoundModel,
    SimConfig, Strategy, StrategyProfile, AUDIT_FILE, METRICS_FILE,
};
use tamperproof::{LogicalClock, Parallelism, Timestamp};

type Outcome = Result<String, String>;
type OpCounts = (usize, usize);
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn raw(device: &str) -> RawCapture {
    RawCapture {
        device_id: device.into(),
        captured_at: Timestamp::from_millis(1_700_000_000_000),
        location: None,
        media_kind: MediaKind::Video,
        witness: false,
    }
}

fn mem_pipeline(store: Arc<ObjectStore>, ledger: Arc<DualLedger>, config: PipelineConfig) -> Pipeline {
    let clock = Arc::new(LogicalClock::starting_at(Timestamp::from_millis(1_700_000_000_000)));
    Pipeline::new(store, ledger, clock, config)
}

// 1. tamper detection over a generated corpus
fn tamper_detection() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (lo, hi) = ((1u64 << 10) as f64, (5u64 << 20) as f64);
    let corpus: Vec<Vec<u8>> = (0..200)
        .map(|_| {
            let size = (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp() as usize;
            let mut buf = vec![0u8; size];
            rng.fill(buf.as_mut_slice());
            buf
        })
        .collect();
    let total: usize = corpus.iter().map(Vec::len).sum();
    let ledger = Arc::new(DualLedger::in_memory());
    let pipeline = mem_pipeline(Arc::new(ObjectStore::in_memory()), ledger.clone(), PipelineConfig::default());
    for (i, media) in corpus.iter().enumerate() {
        let ev = pipeline.stamp(format!("f{i:03}"), MediaLocator::Inline(media.clone()), raw("cam"));
        pipeline.enqueue_capture(ev).map_err(|e| e.to_string())?;
    }
    pipeline.drain().map_err(|e| e.to_string())?;
    ledger.chain_mut().seal_block(Timestamp::from_millis(1_800_000_000_000)).map_err(|e| e.to_string())?;

    let verdicts: Vec<Vec<Verdict>> = Parallelism::default().map_range(corpus.len(), |i| {
        let id = evidence_id_for(&format!("f{i:03}")).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1_000 + i as u64);
        let mut media = corpus[i].clone();
        let mut out = vec![ledger.cross_verify_bytes(&id, &media).verdict];
        for _ in 0..10 {
            let bit = rng.gen_range(0..media.len() * 8);
            media[bit / 8] ^= 1 << (bit % 8);
            out.push(ledger.cross_verify_bytes(&id, &media).verdict);
            media[bit / 8] ^= 1 << (bit % 8);
        }
        out
    });
    let originals_ok = verdicts.iter().all(|v| v[0] == Verdict::Verified);
    let tampered = verdicts.iter().flat_map(|v| &v[1..]).filter(|v| **v == Verdict::MediaTampered).count();
    let elapsed = start.elapsed();
    ensure(originals_ok, || "an untouched file failed to verify".into())?;
    ensure(tampered == 2_000, || format!("{tampered}/2000 mutations detected"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "2000/2000 mutations MediaTampered over {} files ({:.1} MB) in {:.1?}",
        corpus.len(),
        total as f64 / 1e6,
        elapsed
    ))
}

// Independent tree builder: the recursive split at the largest power of two
// below n, with domain-separated SHA-256.
fn sha(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

fn split(n: usize) -> usize {
    let mut k = 1;
    while k * 2 < n {
        k *= 2;
    }
    k
}

fn oracle_root(leaves: &[[u8; 32]]) -> [u8; 32] {
    if leaves.len() == 1 {
        return leaves[0];
    }
    let k = split(leaves.len());
    sha(&[&[1], &oracle_root(&leaves[..k]), &oracle_root(&leaves[k..])])
}

fn oracle_path(leaves: &[[u8; 32]], m: usize) -> Vec<([u8; 32], Side)> {
    if leaves.len() == 1 {
        return Vec::new();
    }
    let k = split(leaves.len());
    if m < k {
        let mut p = oracle_path(&leaves[..k], m);
        p.push((oracle_root(&leaves[k..]), Side::Right));
        p
    } else {
        let mut p = oracle_path(&leaves[k..], m - k);
        p.push((oracle_root(&leaves[..k]), Side::Left));
        p
    }
}

// 2. Merkle roots and proofs against the independent builder
fn merkle_oracle() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut chain = AnchorChain::in_memory();
    let mut blocks: Vec<Vec<AnchorRecord>> = Vec::new();
    let mut t = 1_700_000_000_000i64;
    for size in 1..=32usize {
        let mut anchors = Vec::new();
        for j in 0..size {
            t += 1;
            let record = AnchorRecord {
                evidence_id: EvidenceId::new(format!("b{size:02}-{j:02}")).unwrap(),
                content_hash: tamperproof::evidence::hash_bytes(&rng.gen::<[u8; 32]>()),
                manifest_hash: tamperproof::evidence::hash_bytes(&rng.gen::<[u8; 32]>()),
                submitted_at: Timestamp::from_millis(t),
            };
            chain.append_anchor(record.clone()).map_err(|e| e.to_string())?;
            anchors.push(record);
        }
        chain.seal_block(Timestamp::from_millis(t)).map_err(|e| e.to_string())?;
        blocks.push(anchors);
    }
    let headers: Vec<_> = (0..32).map(|h| chain.header(h).unwrap()).collect();
    let (mut proofs, mut rejected, mut cross) = (0, 0, 0);
    for (h, anchors) in blocks.iter().enumerate() {
        let leaves: Vec<[u8; 32]> = anchors.iter().map(|a| sha(&[&[0], &a.canonical_bytes()])).collect();
        let root = oracle_root(&leaves);
        ensure(headers[h].merkle_root.digest == root, || format!("root mismatch for size {}", h + 1))?;
        for (m, anchor) in anchors.iter().enumerate() {
            let proof = chain.prove_inclusion(&anchor.evidence_id).map_err(|e| e.to_string())?;
            let expected = oracle_path(&leaves, m);
            let got: Vec<_> = proof.siblings.iter().map(|s| (s.digest.digest, s.side)).collect();
            ensure(got == expected && proof.leaf_index as usize == m, || {
                format!("proof mismatch size {} leaf {m}", h + 1)
            })?;
            ensure(chain.verify_inclusion(anchor, &proof, &headers[h]), || format!("valid proof rejected at {h}/{m}"))?;
            proofs += 1;
            for (other, header) in headers.iter().enumerate() {
                if other == h {
                    continue;
                }
                cross += 2;
                let relabeled = MerkleProof {
                    block_height: header.height,
                    ..proof.clone()
                };
                if !chain.verify_inclusion(anchor, &proof, header) {
                    rejected += 1;
                }
                if !chain.verify_inclusion(anchor, &relabeled, header) {
                    rejected += 1;
                }
            }
        }
    }
    ensure(rejected == cross, || format!("{} cross-block proofs accepted", cross - rejected))?;
    Ok(format!(
        "sizes 1..32: roots match, {proofs} proofs match the oracle, {cross}/{cross} cross-block proofs rejected"
    ))
}

// 3. at-least-once delivery converges on single-delivery state
fn pipeline_idempotency() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let events: Vec<CaptureEvent> = (0..500)
        .map(|i| {
            let mut media = vec![0u8; rng.gen_range(64..4096)];
            rng.fill(media.as_mut_slice());
            let mut meta = raw(&format!("car-{}", i % 17));
            meta.witness = i % 11 == 0;
            CaptureEvent::new(format!("e{i:04}"), MediaLocator::Inline(media), meta, Timestamp::from_millis(1_700_000_000_000 + i))
        })
        .collect();

    let run = |dir: &Path, schedule: &[usize], faults: FaultPlan| -> Result<(Vec<u8>, Vec<u8>, usize, usize), String> {
        let ledger = Arc::new(DualLedger::open_dir(dir).map_err(|e| e.to_string())?);
        let p = mem_pipeline(
            Arc::new(ObjectStore::in_memory()),
            ledger.clone(),
            PipelineConfig { faults, ..Default::default() },
        );
        for &i in schedule {
            p.enqueue_capture(events[i].clone()).map_err(|e| e.to_string())?;
        }
        let stats = p.drain().map_err(|e| e.to_string())?;
        ledger.chain_mut().seal_block(Timestamp::from_millis(1_800_000_000_000)).map_err(|e| e.to_string())?;
        drop(p);
        drop(ledger);
        let chain = std::fs::read(dir.join(CHAIN_FILE)).map_err(|e| e.to_string())?;
        let private = std::fs::read(dir.join(PRIVATE_FILE)).map_err(|e| e.to_string())?;
        Ok((chain, private, stats.duplicate_count, stats.retry_count + stats.failed_count))
    };

    let single: Vec<usize> = (0..500).collect();
    // redeliveries land after the original, anywhere later in the stream
    let mut schedule = single.clone();
    let dup: Vec<usize> = single.choose_multiple(&mut rng, 150).copied().collect();
    for i in dup {
        let pos = schedule.iter().position(|&x| x == i).unwrap();
        let at = rng.gen_range(pos + 1..=schedule.len());
        schedule.insert(at, i);
    }
    let mut faults = FaultPlan::none();
    for &i in single.choose_multiple(&mut rng, 50) {
        for attempt in 1..=rng.gen_range(1..=3u32) {
            faults = faults.fail_attempt(format!("e{i:04}"), attempt, Stage::ALL[rng.gen_range(0..Stage::ALL.len())]);
        }
    }
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let reference = run(a.path(), &single, FaultPlan::none())?;
    let noisy = run(b.path(), &schedule, faults)?;
    ensure(noisy.2 == 150, || format!("{} duplicates reported, expected 150", noisy.2))?;
    ensure(noisy.3 > 0, || "no injected failure fired".into())?;
    ensure(reference.0 == noisy.0, || "chain files differ".into())?;
    ensure(reference.1 == noisy.1, || "private ledger files differ".into())?;
    Ok(format!(
        "{} deliveries (150 duplicates, {} injected failures on 50 events): chain ({} B) and private ledger ({} B) bit-identical",
        schedule.len(),
        noisy.3,
        noisy.0.len(),
        noisy.1.len()
    ))
}

fn mixed_population() -> Vec<StrategyProfile> {
    vec![
        StrategyProfile::new(Strategy::Truthful { accuracy: 0.9, amount_noise: 0.03 }, 12),
        StrategyProfile::new(Strategy::UniformRandom, 4),
        StrategyProfile::new(Strategy::Lazy { no_reveal_probability: 0.5 }, 4),
        StrategyProfile::new(Strategy::Adversarial { validity: true, amount: 20_000 }, 2),
    ]
}

// 4. token conservation
fn token_conservation() -> Outcome {
    let config = SimConfig {
        claim_count: 1_000,
        seed: 4,
        params: AdjudicationParams { panel_size: 5, ..Default::default() },
        strategies: mixed_population(),
        ..SimConfig::default()
    };
    let run = run_simulation_in(&config, None).map_err(|e| e.to_string())?;
    let m = &run.metrics;
    let fee = config.params.fee_pool as i64;
    let mut checked = 0;
    for round in run.state.adjudication.rounds() {
        let deltas = round.deltas.as_ref().ok_or_else(|| format!("{} not finalized", round.round_id))?;
        let non_fee: i64 = deltas.iter().filter(|d| d.reason != DeltaReason::FeeShare).map(|d| d.delta).sum();
        let fees: i64 = deltas.iter().filter(|d| d.reason == DeltaReason::FeeShare).map(|d| d.delta).sum();
        ensure(non_fee == 0 && (fees == 0 || fees == fee), || {
            format!("{}: non-fee sum {non_fee}, fee sum {fees}", round.round_id)
        })?;
        checked += 1;
    }
    let stakes: u128 = run.state.adjudication.registry().iter().map(|a| u128::from(a.total_stake())).sum();
    let recomputed = run.state.bank.total_supply() + stakes;
    ensure(m.token_supply_drift == 0, || format!("drift {}", m.token_supply_drift))?;
    ensure(recomputed == u128::from(m.token_supply_initial), || {
        format!("balances sum to {recomputed}, started at {}", m.token_supply_initial)
    })?;
    ensure(m.escalation_rate > 0.0, || "no escalation exercised".into())?;
    Ok(format!(
        "1000 claims, {checked} rounds balanced (escalation rate {:.3}), supply {} -> {}, drift 0",
        m.escalation_rate, m.token_supply_initial, m.token_supply_final
    ))
}

// 5. Schelling incentive
fn schelling_incentive() -> Outcome {
    let config = SimConfig {
        claim_count: 1_000,
        seed: 5,
        params: AdjudicationParams { panel_size: 5, ..Default::default() },
        strategies: vec![
            StrategyProfile::new(Strategy::Truthful { accuracy: 0.9, amount_noise: 0.03 }, 14),
            StrategyProfile::new(Strategy::UniformRandom, 6),
        ],
        ..SimConfig::default()
    };
    let m = run_simulation(&config).map_err(|e| e.to_string())?;
    let truthful = m.strategies["truthful"].mean_stake_delta;
    let random = m.strategies["uniform_random"].mean_stake_delta;
    ensure(m.decision_accuracy >= 0.95, || format!("accuracy {}", m.decision_accuracy))?;
    ensure(truthful > random, || format!("truthful {truthful} <= random {random}"))?;

    let model = |k: u32| RoundModel {
        params: AdjudicationParams { panel_size: k, ..Default::default() },
        validity_prior: 0.7,
        true_amount: 5_500,
        random_amounts: RoundModel::amount_grid(1_000, 10_000, 4),
        mix: vec![
            ("truthful".into(), Strategy::Truthful { accuracy: 0.9, amount_noise: 0.03 }, 0.7),
            ("random".into(), Strategy::UniformRandom, 0.3),
        ],
    };
    let exact3 = brute_force_round_expectation(&model(3)).map_err(|e| e.to_string())?;
    let exact5 = brute_force_round_expectation(&model(5)).map_err(|e| e.to_string())?;
    for e in [&exact3, &exact5] {
        ensure(e.per_strategy["truthful"] > e.per_strategy["random"], || format!("oracle: {e:?}"))?;
    }
    let mc = monte_carlo_round_means(&model(3), 10_000, 55, Parallelism::default()).map_err(|e| e.to_string())?;
    let mut zs = BTreeMap::new();
    for (label, est) in &mc {
        let z = (est.mean - exact3.per_strategy[label]) / est.standard_error;
        ensure(z.abs() <= 3.0, || format!("{label}: MC {:.3} vs exact {:.3} ({z:.2} SE)", est.mean, exact3.per_strategy[label]))?;
        zs.insert(label.clone(), z);
    }
    Ok(format!(
        "k=5 accuracy {:.3}, delta/seat truthful {truthful:.2} > random {random:.2}; k=3 MC vs exact: truthful {:.2} vs {:.2} ({:+.2} SE), random {:.2} vs {:.2} ({:+.2} SE)",
        m.decision_accuracy,
        mc["truthful"].mean,
        exact3.per_strategy["truthful"],
        zs["truthful"],
        mc["random"].mean,
        exact3.per_strategy["random"],
        zs["random"],
    ))
}

// 6. deterministic replay
fn deterministic_replay() -> Outcome {
    let config = SimConfig {
        claim_count: 500,
        seed: 6,
        strategies: mixed_population(),
        ..SimConfig::default()
    };
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_simulation_in(&config, Some(a.path())).map_err(|e| e.to_string())?;
    run_simulation_in(&config, Some(b.path())).map_err(|e| e.to_string())?;
    let mut sizes = Vec::new();
    for file in [METRICS_FILE, CHAIN_FILE, PRIVATE_FILE, AUDIT_FILE] {
        let x = std::fs::read(a.path().join(file)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(file)).map_err(|e| e.to_string())?;
        ensure(!x.is_empty() && x == y, || format!("{file} differs between runs"))?;
        sizes.push(format!("{file} {} B", x.len()));
    }
    Ok(format!("byte-identical across runs: {}", sizes.join(", ")))
}

// 7. claim state-machine safety under fuzzed operation sequences
fn state_machine_safety() -> Outcome {
    let store = Arc::new(ObjectStore::in_memory());
    let ledger = Arc::new(DualLedger::in_memory());
    let pipeline = mem_pipeline(store.clone(), ledger.clone(), PipelineConfig::default());
    for (id, body) in [("good", &b"intact footage"[..]), ("bad", b"footage to corrupt")] {
        pipeline
            .enqueue_capture(pipeline.stamp(id, MediaLocator::Inline(body.to_vec()), raw("car")))
            .map_err(|e| e.to_string())?;
    }
    pipeline.drain().map_err(|e| e.to_string())?;
    let bad = evidence_id_for("bad").unwrap();
    let hash = store.record(&bad).unwrap().manifest.content_hash;
    store.overwrite_object_unchecked(&storage_locator(&hash), b"footage to corrupT").map_err(|e| e.to_string())?;
    let evidence = [evidence_id_for("good").unwrap(), bad, EvidenceId::new("ev-unknown").unwrap()];

    let mut base = AdjudicationEngine::new(AdjudicationParams::default()).map_err(|e| e.to_string())?;
    for _ in 0..7 {
        base.register_adjuster("cert", 400).map_err(|e| e.to_string())?;
    }
    let mut base = ClaimsState::new(base, 5_000);
    base.policies.insert(
        "pol".into(),
        Policy { policy_id: "pol".into(), holder: "holder".into(), coverage_limit: 3_000, deductible: 200, active: true },
    );

    let results: Vec<Result<OpCounts, String>> = Parallelism::default().map_range(10_000, |seq| {
        let mut rng = ChaCha20Rng::seed_from_u64(7_000_000 + seq as u64);
        let clock = Arc::new(LogicalClock::starting_at(Timestamp::from_millis(1_700_000_000_000)));
        let mut engine = ClaimsEngine::new(base.clone(), store.clone(), Arc::new(ledger.detached_clone()), clock)
            .with_parallelism(Parallelism::Sequential);
        let supply = engine.state().total_supply();
        let mut ids: Vec<String> = Vec::new();
        let (mut ok, mut refused) = (0, 0);
        for _ in 0..rng.gen_range(5..60) {
            let before: BTreeMap<String, ClaimState> = engine.claims().map(|c| (c.claim_id.clone(), c.state)).collect();
            let claim = if ids.is_empty() { String::from("claim-none") } else { ids[rng.gen_range(0..ids.len())].clone() };
            let result: Result<(), String> = match rng.gen_range(0..12) {
                0 | 1 => {
                    let n = rng.gen_range(0..3);
                    let ev: Vec<_> = (0..n).map(|_| evidence[rng.gen_range(0..evidence.len())].clone()).collect();
                    engine.submit_claim("pol", ev).map(|c| ids.push(c.claim_id)).map_err(|e| e.to_string())
                }
                2 => engine.verify_evidence(&claim).map(drop).map_err(|e| e.to_string()),
                3 => engine.open_adjudication(&claim).map(drop).map_err(|e| e.to_string()),
                4 | 5 => match engine.current_round(&claim) {
                    Ok(round) => {
                        let adj = engine.adjudication_mut();
                        let panel = adj.round(&round).map(|r| r.panel.clone()).unwrap_or_default();
                        let mut r = Ok(());
                        for a in panel {
                            let vote = Vote { validity: rng.gen_bool(0.6), amount: rng.gen_range(0..5_000), salt: rng.gen() };
                            let step = match rng.gen_range(0..4) {
                                0 => adj.commit(&round, &a, vote.commitment(&round, &a)),
                                1 => adj.reveal(&round, &a, vote),
                                2 => adj.commit(&round, &a, vote.commitment(&round, &a)).and_then(|_| {
                                    if adj.round(&round)?.phase == Phase::Commit { adj.close_commits(&round)?; }
                                    adj.reveal(&round, &a, vote)
                                }),
                                _ => adj.close_reveals(&round),
                            };
                            r = r.and(step.map_err(|e| e.to_string()));
                        }
                        r
                    }
                    Err(e) => Err(e.to_string()),
                },
                6 => match engine.current_round(&claim) {
                    Ok(round) => engine.adjudication_mut().close_commits(&round).map_err(|e| e.to_string()),
                    Err(e) => Err(e.to_string()),
                },
                7 | 8 => engine.finalize_adjudication(&claim).map(drop).map_err(|e| e.to_string()),
                9 => {
                    let d = Decision { validity: rng.gen(), amount: rng.gen_range(0..5_000) };
                    engine.apply_decision(&claim, d).map(drop).map_err(|e| e.to_string())
                }
                10 => engine.settle(&claim).map(drop).map_err(|e| e.to_string()),
                _ => {
                    let amount = rng.gen_range(0..3_000);
                    if rng.gen() {
                        engine.bank_mut().transfer(INSURER_POOL, "elsewhere", amount).map_err(|e| e.to_string())
                    } else {
                        engine.bank_mut().transfer("elsewhere", INSURER_POOL, amount).map_err(|e| e.to_string())
                    }
                }
            };
            match result {
                Ok(()) => ok += 1,
                Err(_) => refused += 1,
            }
            for c in engine.claims() {
                let from = before.get(&c.claim_id).copied().unwrap_or(ClaimState::Submitted);
                if from != c.state && !from.can_transition(c.state) {
                    return Err(format!("sequence {seq}: {} moved {from} -> {}", c.claim_id, c.state));
                }
                c.check_consistency().map_err(|e| format!("sequence {seq}: {}: {e}", c.claim_id))?;
            }
            if engine.state().total_supply() != supply {
                return Err(format!("sequence {seq}: supply changed"));
            }
        }
        Ok((ok, refused))
    });
    let mut totals = (0, 0);
    for r in results {
        let (ok, refused) = r?;
        totals.0 += ok;
        totals.1 += refused;
    }
    Ok(format!(
        "10000 sequences, {} operations applied and {} refused, all transitions on the graph",
        totals.0, totals.1
    ))
}

// 8. CLI smoke on a fresh directory
fn cli_smoke() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    let media = dir.path().join("dashcam.mp4");
    std::fs::write(&media, (0..20_000u32).flat_map(|i| i.to_le_bytes()).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    let cli = |args: &[&str]| -> Result<(i32, serde_json::Value), String> {
        let out = Command::new(env!("CARGO_BIN_EXE_tamperproof"))
            .arg("--data-dir")
            .arg(&data)
            .args(["--json", "--at", "2025-03-01T12:00:00Z"])
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        let code = out.status.code().unwrap_or(-1);
        let json = serde_json::from_slice(&out.stdout).unwrap_or(serde_json::Value::Null);
        Ok((code, json))
    };
    let ok = |args: &[&str]| -> Result<serde_json::Value, String> {
        match cli(args)? {
            (0, json) => Ok(json),
            (code, _) => Err(format!("`{}` exited {code}", args.join(" "))),
        }
    };
    let media_arg = media.to_str().unwrap();
    ok(&["init", "--seed", "8"])?;
    ok(&["policy", "add", "--id", "pol-1", "--holder", "alice", "--limit", "10000", "--deductible", "500"])?;
    for i in 0..5 {
        ok(&["adjuster", "register", "--certificate", &format!("cert-{i}"), "--stake", "1000"])?;
    }
    let captured = ok(&["capture", media_arg, "--device", "car-7", "--lat", "48.1", "--lon", "11.6"])?;
    let evidence = captured["evidence_id"].as_str().ok_or("capture printed no evidence id")?.to_owned();
    ok(&["seal"])?;
    let report = ok(&["verify", &evidence, media_arg])?;
    ensure(report["verdict"] == "Verified", || format!("verify said {report}"))?;
    ensure(ok(&["proof", &evidence])?["valid"] == true, || "proof invalid".into())?;
    let claim = ok(&["claim", "submit", "--policy", "pol-1", "--evidence", &evidence])?;
    let claim_id = claim["claim_id"].as_str().ok_or("no claim id")?.to_owned();
    ensure(ok(&["claim", "verify", &claim_id])?["state"] == "evidence_verified", || "evidence not verified".into())?;
    let round = ok(&["adjudicate", "open", &claim_id])?;
    let round_id = round["round_id"].as_str().ok_or("no round id")?.to_owned();
    let panel: Vec<String> = serde_json::from_value(round["panel"].clone()).map_err(|e| e.to_string())?;
    for phase in ["commit", "reveal"] {
        for a in &panel {
            ok(&["adjudicate", phase, &round_id, "--adjuster", a, "--validity", "true", "--amount", "4000"])?;
        }
    }
    let fin = ok(&["adjudicate", "finalize", &claim_id])?;
    ensure(fin["claim_state"] == "approved", || format!("finalize gave {fin}"))?;
    let settled = ok(&["claim", "settle", &claim_id])?;
    ensure(settled["transfer"]["amount"] == 3500, || format!("settle gave {settled}"))?;
    ensure(ok(&["claim", "status", &claim_id])?["state"] == "settled", || "claim not settled".into())?;

    let mut flipped = std::fs::read(&media).map_err(|e| e.to_string())?;
    flipped[1234] ^= 0x10;
    std::fs::write(&media, flipped).map_err(|e| e.to_string())?;
    let (code, tampered) = cli(&["verify", &evidence, media_arg])?;
    ensure(code == 1 && tampered["verdict"] == "MediaTampered", || format!("tampered verify exited {code}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("capture -> seal -> verify -> claim -> adjudicate -> settle exited 0 in {elapsed:.2?}"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("tamper detection", tamper_detection),
        ("merkle oracle equivalence", merkle_oracle),
        ("pipeline idempotency", pipeline_idempotency),
        ("token conservation", token_conservation),
        ("schelling incentive", schelling_incentive),
        ("deterministic replay", deterministic_replay),
        ("state-machine safety", state_machine_safety),
        ("cli end-to-end smoke", cli_smoke),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
