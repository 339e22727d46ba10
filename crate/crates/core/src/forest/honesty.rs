use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::PsuKey;
use crate::error::{Error, Result};
use crate::rng::{self, label};

pub const MAX_REDRAWS: usize = 100;

/// Disjoint PSU sets that grow the tree structure and populate its leaves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HonestyPartition {
    pub split_psus: BTreeSet<PsuKey>,
    pub est_psus: BTreeSet<PsuKey>,
}

impl HonestyPartition {
    pub fn is_split(&self, key: &PsuKey) -> bool {
        self.split_psus.contains(key)
    }

    pub fn is_disjoint(&self) -> bool {
        self.split_psus.is_disjoint(&self.est_psus)
    }
}

/// Assigns each distinct PSU to the split side with probability `q`,
/// redrawing until both sides are nonempty.
pub fn honesty_partition(psus: &[PsuKey], q: f64, seed: u64) -> Result<HonestyPartition> {
    let distinct: BTreeSet<PsuKey> = psus.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::TooFewPsus {
            found: distinct.len(),
        });
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!(
            "honesty probability {q} outside (0, 1)"
        )));
    }
    for attempt in 0..MAX_REDRAWS {
        let mut rng = rng::stream(rng::derive_path(seed, &[label::HONESTY, attempt as u64]));
        let (split, est): (BTreeSet<PsuKey>, BTreeSet<PsuKey>) =
            distinct.iter().partition(|_| rng.random::<f64>() < q);
        if !split.is_empty() && !est.is_empty() {
            return Ok(HonestyPartition {
                split_psus: split,
                est_psus: est,
            });
        }
    }
    Err(Error::EmptySplitSide)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(n: u32) -> Vec<PsuKey> {
        (0..n).map(|j| PsuKey::new(j % 3, j)).collect()
    }

    #[test]
    fn two_psus_land_on_opposite_sides() {
        for seed in 0..200 {
            for q in [0.05, 0.5, 0.95] {
                let p = honesty_partition(&keys(2), q, seed).unwrap();
                assert_eq!((p.split_psus.len(), p.est_psus.len()), (1, 1));
            }
        }
    }

    #[test]
    fn single_psu_is_rejected() {
        let k = vec![PsuKey::new(1, 1); 5];
        assert!(matches!(
            honesty_partition(&k, 0.5, 0),
            Err(Error::TooFewPsus { found: 1 })
        ));
    }

    #[test]
    fn split_fraction_concentrates() {
        let k = keys(200);
        let inside = (0..1000)
            .filter(|&seed| {
                let p = honesty_partition(&k, 0.5, seed).unwrap();
                assert!(p.is_disjoint());
                assert_eq!(p.split_psus.len() + p.est_psus.len(), 200);
                let f = p.split_psus.len() as f64 / 200.0;
                (0.4..=0.6).contains(&f)
            })
            .count();
        assert!(inside >= 950, "{inside}");
    }
}
