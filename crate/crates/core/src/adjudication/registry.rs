use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AdjudicationError, AdjusterId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjuster {
    pub adjuster_id: AdjusterId,
    pub certificate_id: String,
    pub free_stake: u64,
    pub locked_stake: u64,
    pub coherent_count: u64,
    pub incoherent_count: u64,
}

impl Adjuster {
    pub fn total_stake(&self) -> u64 {
        self.free_stake + self.locked_stake
    }
}

/// Pool of certified, staked adjusters in id order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjusterRegistry {
    adjusters: BTreeMap<AdjusterId, Adjuster>,
}

impl AdjusterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        adjuster_id: AdjusterId,
        certificate: &str,
        initial_stake: u64,
        minimum_stake: u64,
    ) -> Result<&Adjuster, AdjudicationError> {
        if certificate.trim().is_empty() {
            return Err(AdjudicationError::EmptyCertificate);
        }
        if initial_stake < minimum_stake {
            return Err(AdjudicationError::StakeBelowMinimum {
                stake: initial_stake,
                minimum: minimum_stake,
            });
        }
        if self.adjusters.contains_key(&adjuster_id) {
            return Err(AdjudicationError::DuplicateAdjuster(adjuster_id));
        }
        let adjuster = Adjuster {
            adjuster_id: adjuster_id.clone(),
            certificate_id: certificate.to_owned(),
            free_stake: initial_stake,
            locked_stake: 0,
            coherent_count: 0,
            incoherent_count: 0,
        };
        Ok(self.adjusters.entry(adjuster_id).or_insert(adjuster))
    }

    pub fn get(&self, id: &AdjusterId) -> Option<&Adjuster> {
        self.adjusters.get(id)
    }

    pub(crate) fn get_mut(&mut self, id: &AdjusterId) -> Result<&mut Adjuster, AdjudicationError> {
        self.adjusters
            .get_mut(id)
            .ok_or_else(|| AdjudicationError::UnknownAdjuster(id.clone()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Adjuster> {
        self.adjusters.values()
    }

    pub fn len(&self) -> usize {
        self.adjusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjusters.is_empty()
    }

    /// Adjusters whose free stake covers `lock`, in id order.
    pub fn eligible(&self, lock: u64) -> impl Iterator<Item = &Adjuster> {
        self.adjusters.values().filter(move |a| a.free_stake >= lock)
    }

    /// Sum of free and locked stake across the pool.
    pub fn total_stake(&self) -> u128 {
        self.adjusters.values().map(|a| u128::from(a.total_stake())).sum()
    }

    pub(crate) fn lock(&mut self, id: &AdjusterId, amount: u64) -> Result<(), AdjudicationError> {
        let a = self.get_mut(id)?;
        if a.free_stake < amount {
            return Err(AdjudicationError::StakeBelowMinimum {
                stake: a.free_stake,
                minimum: amount,
            });
        }
        a.free_stake -= amount;
        a.locked_stake += amount;
        Ok(())
    }
}
