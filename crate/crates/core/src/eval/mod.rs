//! Per-user ranking metrics and the weak/strong user rule.
//!
//! Identification uses a sampled-pool AUC: the user's held-out items split
//! into relevant/irrelevant by a rating cutoff, plus a seeded sample of items
//! the user never interacted with as extra irrelevant items. A user is weak
//! when that AUC is at most `t_p` and their rating density is below `t_s`.

mod metrics;
mod pools;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, UserIdx};

pub use metrics::{candidate_set_auc, ndcg_at_k, ranking_auc, user_auc};
pub use pools::{build_user_pools, Holdout, PoolBuilder, UserPools};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("AUC undefined: {relevant} relevant and {irrelevant} irrelevant items")]
    UndefinedAuc { relevant: usize, irrelevant: usize },
    #[error("user {0:?} not in index range")]
    UnknownUser(UserIdx),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Performance threshold: weak users have AUC at or below it.
    pub t_p: f64,
    /// Density threshold: inactive users have a sparsity index below it.
    pub t_s: f64,
    /// Lowest held-out rating counted as relevant, in native rating units.
    pub relevance_cutoff: f64,
    pub n_sampled_negatives: usize,
}

impl Thresholds {
    pub fn is_inactive(&self, sparsity_index: f64) -> bool {
        sparsity_index < self.t_s
    }

    pub fn is_weak(&self, auc: f64, sparsity_index: f64) -> bool {
        auc <= self.t_p && self.is_inactive(sparsity_index)
    }
}

/// |R| / N for one user. Despite the name this grows with activity.
pub fn sparsity_index(n_rated: usize, n_items: usize) -> f64 {
    assert!(n_items > 0, "sparsity index needs at least one item");
    assert!(n_rated <= n_items, "user rated more items than exist");
    n_rated as f64 / n_items as f64
}

/// Mean per-user sparsity index over every user of `dataset`.
pub fn mean_sparsity_threshold(dataset: &Dataset) -> f64 {
    mean_sparsity(&dataset.user_counts(), dataset.n_items())
}

/// Mean of `count / n_items` over the given per-user counts.
pub fn mean_sparsity(counts: &[usize], n_items: usize) -> f64 {
    counts.iter().map(|&c| sparsity_index(c, n_items)).sum::<f64>() / counts.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserAssessment {
    pub user: UserIdx,
    pub user_id: String,
    /// None when the held-out pool has no relevant or no irrelevant items.
    pub auc: Option<f64>,
    pub sparsity_index: f64,
    pub inactive: bool,
    pub weak: bool,
    pub n_train: usize,
    pub n_test: usize,
}

impl UserAssessment {
    pub fn new(
        user: UserIdx,
        user_id: impl Into<String>,
        auc: Option<f64>,
        sparsity_index: f64,
        n_train: usize,
        n_test: usize,
        thresholds: &Thresholds,
    ) -> Self {
        let mut a = UserAssessment {
            user,
            user_id: user_id.into(),
            auc,
            sparsity_index,
            inactive: false,
            weak: false,
            n_train,
            n_test,
        };
        a.apply(thresholds);
        a
    }

    /// AUC used by the classification rule; undefined counts as unserved (0).
    pub fn classification_auc(&self) -> f64 {
        self.auc.unwrap_or(0.0)
    }

    pub fn apply(&mut self, thresholds: &Thresholds) {
        self.inactive = thresholds.is_inactive(self.sparsity_index);
        self.weak = thresholds.is_weak(self.classification_auc(), self.sparsity_index);
    }
}

/// Splits users into (weak, strong), both in input order.
pub fn classify_users(assessments: &[UserAssessment], thresholds: &Thresholds) -> (Vec<UserIdx>, Vec<UserIdx>) {
    assessments
        .iter()
        .map(|a| (a.user, thresholds.is_weak(a.classification_auc(), a.sparsity_index)))
        .fold((Vec::new(), Vec::new()), |(mut weak, mut strong), (u, is_weak)| {
            if is_weak {
                weak.push(u);
            } else {
                strong.push(u);
            }
            (weak, strong)
        })
}

/// Scores every user of the split on its `holdout` pools, in ascending user order.
/// Density counts all of a user's interactions, not just training ones.
pub fn assess_users(
    pools: &PoolBuilder,
    holdout: Holdout,
    thresholds: &Thresholds,
    seed: u64,
    score: impl Fn(UserIdx, crate::data::ItemIdx) -> f64,
) -> Vec<UserAssessment> {
    let split = pools.split();
    let n_items = split.all.n_items();
    let all_counts = split.all.user_counts();
    let train_counts = split.train.user_counts();
    (0..split.all.n_users() as u32)
        .map(UserIdx)
        .map(|u| {
            let p = pools.pools(u, holdout, thresholds, seed).expect("user in range");
            let rel: Vec<f64> = p.relevant.iter().map(|&i| score(u, i)).collect();
            let irr: Vec<f64> = p.irrelevant.iter().map(|&i| score(u, i)).collect();
            UserAssessment::new(
                u,
                split.all.user_id(u),
                user_auc(&rel, &irr).ok(),
                sparsity_index(all_counts[u.index()], n_items),
                train_counts[u.index()],
                pools.held_out(u, Holdout::Test).len(),
                thresholds,
            )
        })
        .collect()
}

/// Mean AUC over users whose AUC is defined, with that user count.
pub fn mean_defined_auc<'a>(assessments: impl IntoIterator<Item = &'a UserAssessment>) -> (f64, usize) {
    let (sum, n) = assessments
        .into_iter()
        .filter_map(|a| a.auc)
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (if n == 0 { 0.0 } else { sum / n as f64 }, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_ratings;
    use crate::data::DatasetFormat;

    fn th(t_p: f64, t_s: f64) -> Thresholds {
        Thresholds {
            t_p,
            t_s,
            relevance_cutoff: 4.0,
            n_sampled_negatives: 0,
        }
    }

    fn assessment(u: u32, auc: Option<f64>, density: f64, t: &Thresholds) -> UserAssessment {
        UserAssessment::new(UserIdx(u), u.to_string(), auc, density, 10, 2, t)
    }

    #[test]
    fn sparsity_examples() {
        assert!((sparsity_index(20, 1682) - 0.011890606420927467).abs() < 1e-15);
        assert_eq!(sparsity_index(0, 50), 0.0);
        assert_eq!(sparsity_index(50, 50), 1.0);
    }

    #[test]
    fn mean_sparsity_examples() {
        // one user who rated half of the items
        let ds = parse_ratings("1 1 5 0\n1 2 5 0\n2 3 1 0\n2 4 1 0\n".as_bytes(), DatasetFormat::Ml100k).unwrap();
        assert!((mean_sparsity_threshold(&ds) - 0.5).abs() < 1e-15);
        assert!((mean_sparsity(&[1, 3], 10) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn classification_examples() {
        let t = th(0.5, 0.063);
        assert!(assessment(1, Some(0.3), 0.01, &t).weak);
        let active = assessment(2, Some(0.3), 0.2, &t);
        assert!(!active.weak && !active.inactive);
        let good = assessment(3, Some(0.7), 0.01, &t);
        assert!(!good.weak && good.inactive);
        // boundary: auc equal to t_p is weak
        assert!(assessment(4, Some(0.5), 0.01, &t).weak);
        // undefined AUC counts as 0
        assert!(assessment(5, None, 0.01, &t).weak);
    }

    #[test]
    fn zero_performance_threshold() {
        let t = th(0.0, 0.063);
        assert!(!assessment(1, Some(0.01), 0.01, &t).weak);
        assert!(assessment(2, Some(0.0), 0.01, &t).weak);
    }

    #[test]
    fn classify_partitions() {
        let t = th(0.5, 0.1);
        let rows: Vec<_> = (0..20)
            .map(|u| assessment(u, Some(u as f64 / 20.0), (u % 4) as f64 / 20.0, &t))
            .collect();
        let (weak, strong) = classify_users(&rows, &t);
        assert_eq!(weak.len() + strong.len(), rows.len());
        for a in &rows {
            assert_eq!(weak.contains(&a.user), a.weak);
            assert_eq!(strong.contains(&a.user), !a.weak);
            if a.weak {
                assert!(a.inactive && a.classification_auc() <= t.t_p);
            }
        }
    }
}
