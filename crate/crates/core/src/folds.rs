//! Balanced K-fold assignment and seed derivation.
//!
//! All randomness in the crate comes from `ChaCha8Rng` streams seeded with
//! 64-bit integers. Child seeds are derived with [`mix_seed`], a SplitMix64
//! finalizer applied to `master + golden * (index + 1)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic RNG used throughout the crate.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `index` of `master`.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1))))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    k: usize,
    fold_of: Vec<usize>,
    seed: u64,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }
    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    /// Units in fold `k`.
    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] == k).collect()
    }

    /// Units outside fold `k` (the training complement).
    pub fn complement(&self, k: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] != k).collect()
    }
}

/// Uniformly random balanced partition of `0..n` into `k` folds.
///
/// A ChaCha8 shuffle of `0..n` is dealt round-robin, so fold sizes are
/// `floor(n/k)` or `ceil(n/k)`.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return Err(Error::BadK { k, n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let mut fold_of = vec![0; n];
    for (pos, &unit) in perm.iter().enumerate() {
        fold_of[unit] = pos % k;
    }
    Ok(FoldAssignment { k, fold_of, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_into_five() {
        let f = make_folds(10, 5, 1).unwrap();
        assert_eq!(f.fold_sizes(), vec![2; 5]);
    }

    #[test]
    fn seven_into_three() {
        let mut sizes = make_folds(7, 3, 1).unwrap().fold_sizes();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2, 3]);
    }

    #[test]
    fn deterministic() {
        assert_eq!(make_folds(50, 4, 9).unwrap(), make_folds(50, 4, 9).unwrap());
        assert_ne!(make_folds(50, 4, 9).unwrap().fold_of(), make_folds(50, 4, 10).unwrap().fold_of());
    }

    #[test]
    fn bad_k() {
        assert!(matches!(make_folds(5, 1, 0), Err(Error::BadK { .. })));
        assert!(matches!(make_folds(5, 6, 0), Err(Error::BadK { .. })));
    }

    #[test]
    fn mix_seed_separates_streams() {
        let s: Vec<u64> = (0..100).map(|r| mix_seed(42, r)).collect();
        let mut u = s.clone();
        u.sort();
        u.dedup();
        assert_eq!(u.len(), s.len());
    }

    proptest! {
        #[test]
        fn partition_is_balanced(n in 2usize..300, k in 2usize..20, seed: u64) {
            prop_assume!(k <= n);
            let f = make_folds(n, k, seed).unwrap();
            let sizes = f.fold_sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            let (lo, hi) = (n / k, n.div_ceil(k));
            prop_assert!(sizes.iter().all(|&s| s == lo || s == hi));
            let mut all: Vec<usize> = (0..k).flat_map(|j| f.members(j)).collect();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
