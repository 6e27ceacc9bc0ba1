use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{AdjudicationError, AdjudicationParams, AdjusterId, AdjusterRegistry};
use crate::evidence::hash_parts;

const PANEL_DOMAIN: &[u8] = b"tamperproof.panel.v1";

fn panel_rng(params: &AdjudicationParams, claim_id: &str, escalation_level: u32) -> ChaCha20Rng {
    let seed = hash_parts(&[
        PANEL_DOMAIN,
        &params.rng_seed,
        &(claim_id.len() as u32).to_be_bytes(),
        claim_id.as_bytes(),
        &escalation_level.to_be_bytes(),
    ]);
    ChaCha20Rng::from_seed(seed.digest)
}

/// Draws `size` distinct adjusters without replacement, each draw weighted
/// by free stake among adjusters that can still cover `params.stake_lock`.
///
/// The draw depends only on `(rng_seed, claim_id, escalation_level)` and the
/// pool snapshot. Does not lock any stake.
pub fn select_panel(
    claim_id: &str,
    escalation_level: u32,
    size: usize,
    params: &AdjudicationParams,
    pool: &AdjusterRegistry,
) -> Result<Vec<AdjusterId>, AdjudicationError> {
    let mut candidates: Vec<(AdjusterId, u64)> = pool
        .eligible(params.stake_lock)
        .map(|a| (a.adjuster_id.clone(), a.free_stake))
        .collect();
    if candidates.len() < size {
        return Err(AdjudicationError::InsufficientPool {
            eligible: candidates.len(),
            needed: size,
        });
    }
    let mut rng = panel_rng(params, claim_id, escalation_level);
    let mut panel = Vec::with_capacity(size);
    for _ in 0..size {
        let total: u128 = candidates.iter().map(|(_, w)| u128::from(*w)).sum();
        let mut ticket = rng.gen_range(0..total);
        let pick = candidates
            .iter()
            .position(|(_, w)| {
                let w = u128::from(*w);
                if ticket < w {
                    true
                } else {
                    ticket -= w;
                    false
                }
            })
            .expect("ticket below total weight");
        panel.push(candidates.remove(pick).0);
    }
    Ok(panel)
}
