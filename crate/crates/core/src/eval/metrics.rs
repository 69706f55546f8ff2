use std::collections::HashMap;
use std::hash::Hash;

use super::EvalError;

/// Fraction of (relevant, irrelevant) pairs where the relevant item scores
/// higher; ties count one half.
///
/// Runs in O((n + m) log m) by sorting the irrelevant scores once.
pub fn user_auc(relevant: &[f64], irrelevant: &[f64]) -> Result<f64, EvalError> {
    if relevant.is_empty() || irrelevant.is_empty() {
        return Err(EvalError::UndefinedAuc {
            relevant: relevant.len(),
            irrelevant: irrelevant.len(),
        });
    }
    let mut neg = irrelevant.to_vec();
    neg.sort_by(f64::total_cmp);
    let (mut wins, mut ties) = (0u64, 0u64);
    for &r in relevant {
        let below = neg.partition_point(|&x| x < r);
        let at_or_below = neg.partition_point(|&x| x <= r);
        wins += below as u64;
        ties += (at_or_below - below) as u64;
    }
    let pairs = relevant.len() as u64 * irrelevant.len() as u64;
    Ok((2 * wins + ties) as f64 / (2 * pairs) as f64)
}

/// AUC of an ordered list: earlier positions count as higher scores.
pub fn ranking_auc<T>(ranked: &[T], is_relevant: impl Fn(&T) -> bool) -> Result<f64, EvalError> {
    let mut rel = Vec::new();
    let mut irr = Vec::new();
    for (pos, item) in ranked.iter().enumerate() {
        let score = -(pos as f64);
        if is_relevant(item) {
            rel.push(score);
        } else {
            irr.push(score);
        }
    }
    user_auc(&rel, &irr)
}

/// AUC of a ranked candidate list, defined for one-sided labels too: with no
/// irrelevant candidate every ordering is correct (1.0), with no relevant
/// candidate there is nothing to surface (0.0).
pub fn candidate_set_auc<T>(ranked: &[T], is_relevant: impl Fn(&T) -> bool) -> f64 {
    match ranking_auc(ranked, is_relevant) {
        Ok(auc) => auc,
        Err(EvalError::UndefinedAuc { relevant, .. }) if relevant > 0 => 1.0,
        Err(_) => 0.0,
    }
}

/// NDCG@k with gains from `relevance` (absent items have gain 0).
/// IDCG uses the ideal ordering of all gains in `relevance`; 0 when IDCG is 0.
pub fn ndcg_at_k<T: Eq + Hash>(ranked: &[T], relevance: &HashMap<T, f64>, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let discount = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(pos, item)| relevance.get(item).copied().unwrap_or(0.0) * discount(pos))
        .sum();
    let mut gains: Vec<f64> = relevance.values().copied().filter(|g| *g > 0.0).collect();
    gains.sort_by(|a, b| b.total_cmp(a));
    let idcg: f64 = gains.iter().take(k).enumerate().map(|(pos, g)| g * discount(pos)).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}
