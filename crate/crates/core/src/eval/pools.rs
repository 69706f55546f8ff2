use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EvalError, Thresholds};
use crate::data::{Interaction, ItemIdx, SplitDataset, UserIdx};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Holdout {
    Validation,
    Test,
}

/// Items used to score one user. An empty `relevant` list marks a user whose
/// AUC is undefined.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UserPools {
    pub relevant: Vec<ItemIdx>,
    pub irrelevant: Vec<ItemIdx>,
}

impl UserPools {
    pub fn is_scorable(&self) -> bool {
        !self.relevant.is_empty() && !self.irrelevant.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = ItemIdx> + '_ {
        self.relevant.iter().chain(&self.irrelevant).copied()
    }
}

/// Precomputed per-user lists for building evaluation pools over a split.
pub struct PoolBuilder<'a> {
    split: &'a SplitDataset,
    interacted: Vec<Vec<ItemIdx>>,
    validation: Vec<Vec<Interaction>>,
    test: Vec<Vec<Interaction>>,
}

impl<'a> PoolBuilder<'a> {
    pub fn new(split: &'a SplitDataset) -> Self {
        let interacted = split
            .all
            .by_user()
            .into_iter()
            .map(|list| list.into_iter().map(|i| i.item).collect())
            .collect();
        PoolBuilder {
            split,
            interacted,
            validation: split.validation.by_user(),
            test: split.test.by_user(),
        }
    }

    pub fn split(&self) -> &SplitDataset {
        self.split
    }

    pub fn held_out(&self, user: UserIdx, holdout: Holdout) -> &[Interaction] {
        match holdout {
            Holdout::Validation => &self.validation[user.index()],
            Holdout::Test => &self.test[user.index()],
        }
    }

    /// Items the user never rated in any part of the split, ascending.
    pub fn never_interacted(&self, user: UserIdx) -> Vec<ItemIdx> {
        let seen = &self.interacted[user.index()];
        let mut out = Vec::with_capacity(self.split.all.n_items() - seen.len());
        let mut cursor = 0;
        for i in 0..self.split.all.n_items() as u32 {
            if cursor < seen.len() && seen[cursor].0 == i {
                cursor += 1;
            } else {
                out.push(ItemIdx(i));
            }
        }
        out
    }

    /// Seeded sample of never-interacted items; depends only on (seed, user).
    pub fn sampled_negatives(&self, user: UserIdx, n: usize, seed: u64) -> Vec<ItemIdx> {
        if n == 0 {
            return Vec::new();
        }
        let pool = self.never_interacted(user);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(user.0 as u64);
        let mut picked: Vec<ItemIdx> = rand::seq::index::sample(&mut rng, pool.len(), n.min(pool.len()))
            .into_iter()
            .map(|i| pool[i])
            .collect();
        picked.sort();
        picked
    }

    pub fn pools(&self, user: UserIdx, holdout: Holdout, thresholds: &Thresholds, seed: u64) -> Result<UserPools, EvalError> {
        if user.index() >= self.interacted.len() {
            return Err(EvalError::UnknownUser(user));
        }
        let mut pools = UserPools::default();
        for it in self.held_out(user, holdout) {
            if it.rating >= thresholds.relevance_cutoff {
                pools.relevant.push(it.item);
            } else {
                pools.irrelevant.push(it.item);
            }
        }
        pools
            .irrelevant
            .extend(self.sampled_negatives(user, thresholds.n_sampled_negatives, seed));
        Ok(pools)
    }
}

/// Test-split pools for one user; see [`PoolBuilder`] for batch use.
pub fn build_user_pools(split: &SplitDataset, user: UserIdx, thresholds: &Thresholds, seed: u64) -> Result<UserPools, EvalError> {
    PoolBuilder::new(split).pools(user, Holdout::Test, thresholds, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_ratings, split_per_user, DatasetFormat, SplitRatios};

    fn thresholds(n: usize) -> Thresholds {
        Thresholds {
            t_p: 0.5,
            t_s: 0.1,
            relevance_cutoff: 4.0,
            n_sampled_negatives: n,
        }
    }

    /// User 1 trains on item 1 and holds out i(2):5, j(3):2; items 10.. are unrated by user 1.
    fn split() -> SplitDataset {
        let text = "1 1 3 0\n1 2 5 0\n1 3 2 0\n2 10 4 0\n2 11 4 0\n2 12 4 0\n2 1 4 0\n";
        let ds = parse_ratings(text.as_bytes(), DatasetFormat::Ml100k).unwrap();
        let s = split_per_user(&ds, SplitRatios::new(1.0, 0.0, 0.0).unwrap(), 1).unwrap();
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for it in ds.interactions() {
            if ds.user_id(it.user) == "1" && ds.item_id(it.item) != "1" {
                test.push(*it);
            } else {
                train.push(*it);
            }
        }
        SplitDataset {
            train: ds.with_interactions(train),
            test: ds.with_interactions(test),
            validation: ds.with_interactions(Vec::new()),
            ..s
        }
    }

    #[test]
    fn relevant_and_irrelevant_by_cutoff() {
        let s = split();
        let u = s.all.lookup_user("1").unwrap();
        let p = build_user_pools(&s, u, &thresholds(2), 3).unwrap();
        let ids = |v: &[ItemIdx]| v.iter().map(|&i| s.all.item_id(i).to_string()).collect::<Vec<_>>();
        assert_eq!(ids(&p.relevant), vec!["2"]);
        assert_eq!(p.irrelevant.len(), 3);
        assert_eq!(ids(&p.irrelevant)[0], "3");
        let negs = &ids(&p.irrelevant)[1..];
        assert!(negs.iter().all(|n| ["10", "11", "12"].contains(&n.as_str())));
    }

    #[test]
    fn no_negatives_and_all_relevant_is_unscorable() {
        let s = split();
        let u = s.all.lookup_user("2").unwrap();
        let p = build_user_pools(&s, u, &thresholds(0), 3).unwrap();
        assert!(p.relevant.is_empty() && p.irrelevant.is_empty());
        assert!(!p.is_scorable());
    }

    #[test]
    fn negatives_are_deterministic() {
        let s = split();
        let u = s.all.lookup_user("1").unwrap();
        let a = build_user_pools(&s, u, &thresholds(2), 99).unwrap();
        let b = build_user_pools(&s, u, &thresholds(2), 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pools_never_touch_train() {
        let s = split();
        let b = PoolBuilder::new(&s);
        let train = s.train.by_user();
        for u in 0..s.all.n_users() as u32 {
            let p = b.pools(UserIdx(u), Holdout::Test, &thresholds(50), 5).unwrap();
            for item in p.items() {
                assert!(train[u as usize].iter().all(|t| t.item != item));
            }
        }
    }
}
