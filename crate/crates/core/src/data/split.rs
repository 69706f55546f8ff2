use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Interaction};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self, DataError> {
        let r = SplitRatios { train, validation, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let parts = [self.train, self.validation, self.test];
        let ok = parts.iter().all(|p| p.is_finite() && *p >= 0.0)
            && (parts.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(DataError::BadRatios(parts))
        }
    }

    /// (train, validation, test) sizes for a user with `n` interactions.
    /// Held-out parts take floors; train keeps the remainder and at least one.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
        let mut test = floor(self.test);
        let mut validation = floor(self.validation);
        while n > 0 && test + validation >= n {
            if validation >= test && validation > 0 {
                validation -= 1;
            } else {
                test -= 1;
            }
        }
        (n - test - validation, validation, test)
    }
}

/// Train/validation/test parts that share the full dataset's index space.
#[derive(Clone, Debug)]
pub struct SplitDataset {
    pub all: Dataset,
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub split_seed: u64,
    pub ratios: SplitRatios,
}

/// Splits every user's interactions independently: a per-user seeded shuffle,
/// then test and validation are cut off the front.
pub fn split_per_user(dataset: &Dataset, ratios: SplitRatios, seed: u64) -> Result<SplitDataset, DataError> {
    ratios.validate()?;
    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for (user, mut list) in dataset.by_user().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(user as u64);
        list.shuffle(&mut rng);
        let (_, n_valid, n_test) = ratios.sizes(list.len());
        let (held_test, rest) = list.split_at(n_test);
        let (held_valid, rest) = rest.split_at(n_valid);
        test.extend_from_slice(held_test);
        validation.extend_from_slice(held_valid);
        train.extend_from_slice(rest);
    }
    let part = |mut v: Vec<Interaction>| {
        v.sort_by_key(|i| (i.user, i.item));
        dataset.with_interactions(v)
    };
    Ok(SplitDataset {
        all: dataset.clone(),
        train: part(train),
        validation: part(validation),
        test: part(test),
        split_seed: seed,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetFormat, RawRating};
    use proptest::prelude::*;

    fn dataset(counts: &[usize]) -> Dataset {
        let mut rows = Vec::new();
        for (u, &n) in counts.iter().enumerate() {
            for i in 0..n {
                rows.push(RawRating {
                    user: (u + 1).to_string(),
                    item: (i + 1).to_string(),
                    rating: (1 + (i + u) % 5) as f64,
                    timestamp: Some(i as i64),
                });
            }
        }
        Dataset::from_raw(rows, DatasetFormat::Ml100k, 0).unwrap()
    }

    #[test]
    fn exact_ratio_sizes() {
        let r = SplitRatios::default();
        assert_eq!(r.sizes(10), (8, 1, 1));
        assert_eq!(r.sizes(20), (16, 2, 2));
        assert_eq!(r.sizes(3), (3, 0, 0));
        assert_eq!(r.sizes(1), (1, 0, 0));
        assert_eq!(r.sizes(29), (25, 2, 2));
    }

    #[test]
    fn train_always_keeps_one() {
        let r = SplitRatios::new(0.0, 0.5, 0.5).unwrap();
        assert_eq!(r.sizes(2), (1, 0, 1));
        assert_eq!(r.sizes(4), (1, 1, 2));
    }

    #[test]
    fn ratios_must_sum_to_one() {
        assert!(matches!(SplitRatios::new(0.8, 0.1, 0.2), Err(DataError::BadRatios(_))));
        assert!(SplitRatios::new(0.8, 0.1, 0.1 + 5e-10).is_ok());
        assert!(SplitRatios::new(1.2, -0.1, -0.1).is_err());
    }

    #[test]
    fn per_user_counts() {
        let ds = dataset(&[10, 20]);
        let s = split_per_user(&ds, SplitRatios::default(), 7).unwrap();
        assert_eq!(s.train.user_counts(), vec![8, 16]);
        assert_eq!(s.validation.user_counts(), vec![1, 2]);
        assert_eq!(s.test.user_counts(), vec![1, 2]);
    }

    #[test]
    fn deterministic_for_seed() {
        let ds = dataset(&[30, 25, 40]);
        let a = split_per_user(&ds, SplitRatios::default(), 11).unwrap();
        let b = split_per_user(&ds, SplitRatios::default(), 11).unwrap();
        assert_eq!(a.test.interactions(), b.test.interactions());
        assert_eq!(a.validation.interactions(), b.validation.interactions());
        let c = split_per_user(&ds, SplitRatios::default(), 12).unwrap();
        assert_ne!(a.test.interactions(), c.test.interactions());
    }

    proptest! {
        #[test]
        fn split_partitions_each_user(counts in proptest::collection::vec(1usize..40, 1..8), seed in any::<u64>()) {
            let ds = dataset(&counts);
            let s = split_per_user(&ds, SplitRatios::default(), seed).unwrap();
            let all = ds.by_user();
            let (tr, va, te) = (s.train.by_user(), s.validation.by_user(), s.test.by_user());
            for u in 0..ds.n_users() {
                let mut union: Vec<_> = tr[u].iter().chain(&va[u]).chain(&te[u]).map(|i| i.item).collect();
                prop_assert!(!tr[u].is_empty());
                let n = union.len();
                union.sort();
                union.dedup();
                prop_assert_eq!(union.len(), n);
                let expect: Vec<_> = all[u].iter().map(|i| i.item).collect();
                prop_assert_eq!(union, expect);
            }
            prop_assert_eq!(s.train.len() + s.validation.len() + s.test.len(), ds.len());
        }
    }
}
