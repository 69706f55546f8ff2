use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::MergeMode;
use crate::data::{ItemIdx, UserIdx};
use crate::eval::candidate_set_auc;
use crate::ranking::{ListSource, RankedList};

#[derive(Debug, Error, PartialEq)]
#[error("lists for user {0:?} rank different candidate sets")]
pub struct MismatchedCandidates(pub UserIdx);

/// Picks the list to serve a weak user. Evaluation mode keeps the LLM list only
/// when its candidate-set AUC is strictly higher; deployment mode always does.
pub fn merge_rankings(
    rs_list: &RankedList,
    llm_list: &RankedList,
    relevant: &HashSet<ItemIdx>,
    mode: MergeMode,
) -> Result<RankedList, MismatchedCandidates> {
    if rs_list.user != llm_list.user || !rs_list.same_items(llm_list) {
        return Err(MismatchedCandidates(rs_list.user));
    }
    let pick_llm = match mode {
        MergeMode::Deployment => true,
        MergeMode::Evaluation => {
            let auc = |l: &RankedList| candidate_set_auc(&l.items, |i| relevant.contains(i));
            auc(llm_list) > auc(rs_list)
        }
    };
    Ok(if pick_llm { llm_list.clone() } else { rs_list.clone() })
}

/// Weak users whose LLM list still scores at or below `t_p`.
///
/// # Panics
/// If a weak user has no entry in `auc_llm`.
pub fn weak_count_after(weak: &[UserIdx], auc_llm: &BTreeMap<UserIdx, f64>, t_p: f64) -> usize {
    weak.iter()
        .filter(|u| *auc_llm.get(u).unwrap_or_else(|| panic!("no LLM AUC for weak user {u:?}")) <= t_p)
        .count()
}

/// Relative drop in weak users, as a fraction; 0 when there were none.
pub fn reduction_fraction(weak_before: usize, weak_after: usize) -> f64 {
    if weak_before == 0 {
        0.0
    } else {
        1.0 - weak_after as f64 / weak_before as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBlock {
    pub n_queries: usize,
    pub per_query_seconds: f64,
    pub total_seconds: f64,
    /// Cost of querying the LLM for every user instead.
    pub all_users_seconds: f64,
    /// `1 - total / all_users`, as a fraction.
    pub savings_pct: f64,
}

pub fn cost_report(n_weak: usize, n_users: usize, per_query_seconds: f64) -> CostBlock {
    debug_assert!(n_weak <= n_users);
    let total = n_weak as f64 * per_query_seconds;
    let all = n_users as f64 * per_query_seconds;
    CostBlock {
        n_queries: n_weak,
        per_query_seconds,
        total_seconds: total,
        all_users_seconds: all,
        savings_pct: if all > 0.0 { 1.0 - total / all } else { 0.0 },
    }
}

/// Tags a list as served by its source.
pub(crate) fn with_source(list: &RankedList, source: ListSource) -> RankedList {
    RankedList::new(list.user, list.items.clone(), source)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(items: &[u32], source: ListSource) -> RankedList {
        RankedList::new(UserIdx(0), items.iter().map(|&i| ItemIdx(i)).collect(), source)
    }

    fn rel(items: &[u32]) -> HashSet<ItemIdx> {
        items.iter().map(|&i| ItemIdx(i)).collect()
    }

    #[test]
    fn evaluation_keeps_better_list() {
        let rs = list(&[2, 1, 0], ListSource::Rs);
        let llm = list(&[0, 1, 2], ListSource::Llm);
        let m = merge_rankings(&rs, &llm, &rel(&[0]), MergeMode::Evaluation).unwrap();
        assert_eq!(m.source, ListSource::Llm);
        let m = merge_rankings(&rs, &llm, &rel(&[2]), MergeMode::Evaluation).unwrap();
        assert_eq!(m.source, ListSource::Rs);
    }

    #[test]
    fn ties_go_to_rs() {
        let rs = list(&[0, 1, 2], ListSource::Rs);
        let llm = list(&[0, 2, 1], ListSource::Llm);
        let m = merge_rankings(&rs, &llm, &rel(&[0]), MergeMode::Evaluation).unwrap();
        assert_eq!(m.source, ListSource::Rs);
    }

    #[test]
    fn deployment_trusts_llm() {
        let rs = list(&[0, 1], ListSource::Rs);
        let llm = list(&[1, 0], ListSource::Llm);
        let m = merge_rankings(&rs, &llm, &rel(&[0]), MergeMode::Deployment).unwrap();
        assert_eq!(m, llm);
    }

    #[test]
    fn mismatched_sets_rejected() {
        let rs = list(&[0, 1], ListSource::Rs);
        let llm = list(&[0, 2], ListSource::Llm);
        assert!(merge_rankings(&rs, &llm, &rel(&[0]), MergeMode::Evaluation).is_err());
    }

    #[test]
    fn weak_after_counts_inclusive() {
        let weak = vec![UserIdx(0), UserIdx(1), UserIdx(2)];
        let auc: BTreeMap<_, _> = [(UserIdx(0), 0.3), (UserIdx(1), 0.6), (UserIdx(2), 0.5)].into_iter().collect();
        assert_eq!(weak_count_after(&weak, &auc, 0.5), 2);
    }

    #[test]
    fn cost_examples() {
        let c = cost_report(330, 943, 8.0);
        assert_eq!(c.total_seconds, 2640.0);
        assert_eq!(c.all_users_seconds, 7544.0);
        assert!((c.savings_pct - 0.650053).abs() < 1e-6);
        assert_eq!(cost_report(0, 943, 8.0).savings_pct, 1.0);
        assert_eq!(cost_report(943, 943, 8.0).savings_pct, 0.0);
    }
}
