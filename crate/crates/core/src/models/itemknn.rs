use serde::{Deserialize, Serialize};

use super::{HyperParams, ModelError, ModelKind, RankerState, TrainedRanker};
use crate::data::{Dataset, ItemIdx, UserIdx};

const SCORE_EPS: f64 = 1e-9;

/// Item-item neighborhood model over explicit ratings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemKnn {
    k_neighbors: usize,
    shrink: f64,
    /// Per item: (neighbor, similarity), best first.
    neighbors: Vec<Vec<(u32, f64)>>,
    /// Per user: (item, rating) from training data, sorted by item.
    user_ratings: Vec<Vec<(u32, f64)>>,
}

/// Full shrunk-cosine similarity rows, `sim(i, j) = <r_i, r_j> / (|r_i| |r_j| + shrink)`,
/// keeping only non-zero entries with `j != i`. Rows are sorted best first,
/// ties by ascending neighbor index.
pub fn cosine_similarities(train: &Dataset, shrink: f64) -> Vec<Vec<(u32, f64)>> {
    let n_items = train.n_items();
    let mut raters: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_items];
    let mut user_items: Vec<Vec<(u32, f64)>> = vec![Vec::new(); train.n_users()];
    for it in train.interactions() {
        raters[it.item.index()].push((it.user.0, it.rating));
        user_items[it.user.index()].push((it.item.0, it.rating));
    }
    for list in raters.iter_mut().chain(user_items.iter_mut()) {
        list.sort_by_key(|e| e.0);
    }
    let norms: Vec<f64> = raters
        .iter()
        .map(|r| r.iter().map(|(_, x)| x * x).sum::<f64>().sqrt())
        .collect();

    let mut dot = vec![0.0; n_items];
    let mut touched_flag = vec![false; n_items];
    let mut touched = Vec::new();
    let mut rows = Vec::with_capacity(n_items);
    for i in 0..n_items {
        for &(u, r_ui) in &raters[i] {
            for &(j, r_uj) in &user_items[u as usize] {
                let j = j as usize;
                if !touched_flag[j] {
                    touched_flag[j] = true;
                    touched.push(j);
                }
                dot[j] += r_ui * r_uj;
            }
        }
        let mut row = Vec::new();
        for &j in &touched {
            if j != i {
                let denom = norms[i] * norms[j] + shrink;
                if denom > 0.0 && dot[j] != 0.0 {
                    row.push((j as u32, dot[j] / denom));
                }
            }
            dot[j] = 0.0;
            touched_flag[j] = false;
        }
        touched.clear();
        row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        rows.push(row);
    }
    rows
}

impl ItemKnn {
    pub fn fit(train: &Dataset, k_neighbors: usize, shrink: f64) -> ItemKnn {
        let mut neighbors = cosine_similarities(train, shrink);
        for row in &mut neighbors {
            row.truncate(k_neighbors);
        }
        let user_ratings = train
            .by_user()
            .into_iter()
            .map(|l| l.into_iter().map(|i| (i.item.0, i.rating)).collect())
            .collect();
        ItemKnn {
            k_neighbors,
            shrink,
            neighbors,
            user_ratings,
        }
    }

    /// Same similarities with fewer neighbors; `k` above the fitted size is a no-op.
    pub fn truncated(&self, k: usize) -> ItemKnn {
        let mut out = self.clone();
        out.k_neighbors = k.min(self.k_neighbors);
        for row in &mut out.neighbors {
            row.truncate(out.k_neighbors);
        }
        out
    }

    pub fn k_neighbors(&self) -> usize {
        self.k_neighbors
    }

    pub fn shrink(&self) -> f64 {
        self.shrink
    }

    pub fn neighbors(&self, item: ItemIdx) -> &[(u32, f64)] {
        &self.neighbors[item.index()]
    }

    /// Similarity if `j` is among `i`'s retained neighbors, else 0.
    pub fn similarity(&self, i: ItemIdx, j: ItemIdx) -> f64 {
        self.neighbors[i.index()]
            .iter()
            .find(|(n, _)| *n == j.0)
            .map_or(0.0, |(_, s)| *s)
    }

    /// Similarity-weighted mean of the user's ratings on the item's neighbors.
    pub fn score(&self, user: UserIdx, item: ItemIdx) -> f64 {
        let rated = &self.user_ratings[user.index()];
        let (mut num, mut den) = (0.0, 0.0);
        for &(j, s) in &self.neighbors[item.index()] {
            if let Ok(pos) = rated.binary_search_by_key(&j, |e| e.0) {
                num += s * rated[pos].1;
                den += s.abs();
            }
        }
        num / (den + SCORE_EPS)
    }

    pub(crate) fn into_ranker(self, n_users: usize, n_items: usize) -> TrainedRanker {
        let hp = HyperParams {
            k_neighbors: self.k_neighbors,
            shrink: self.shrink,
            ..HyperParams::default()
        };
        TrainedRanker {
            kind: ModelKind::ItemKnn,
            state: RankerState::ItemKnn(self),
            training_seed: 0,
            hyperparameters: hp,
            n_users,
            n_items,
            epochs_trained: 0,
        }
    }
}

pub fn train_itemknn(train: &Dataset, k_neighbors: usize, shrink: f64) -> Result<TrainedRanker, ModelError> {
    let hp = HyperParams {
        k_neighbors,
        shrink,
        ..HyperParams::default()
    };
    hp.validate(ModelKind::ItemKnn)?;
    Ok(ItemKnn::fit(train, k_neighbors, shrink).into_ranker(train.n_users(), train.n_items()))
}
