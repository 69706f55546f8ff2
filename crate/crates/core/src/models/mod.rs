//! Conventional rankers: item-based KNN, BPR matrix factorization and an
//! MLP-only neural collaborative filter.

mod bpr;
mod itemknn;
mod ncf;
mod optim;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, ItemIdx, UserIdx};
use crate::ranking::{ListSource, RankedList};

pub use bpr::{bpr_gradient, bpr_objective, train_bpr, Bpr, BprGradient, BprTrainer};
pub use itemknn::{cosine_similarities, train_itemknn, ItemKnn};
pub use ncf::{train_ncf, Dense, Mlp, MlpGradient, Ncf, NcfGradient, NcfTrainer};
pub use optim::Optimizer;

/// Version tag written into serialized model artifacts.
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown user index {0}")]
    UnknownUser(u32),
    #[error("unknown item index {0}")]
    UnknownItem(u32),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("candidate item {0} listed twice")]
    DuplicateCandidate(u32),
    #[error("model artifact {path}: {reason}")]
    Artifact { path: String, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    ItemKnn,
    Bpr,
    Ncf,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::ItemKnn => "itemknn",
            ModelKind::Bpr => "bpr",
            ModelKind::Ncf => "ncf",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub embedding_dim: usize,
    pub mlp_hidden: Vec<usize>,
    pub dropout: f64,
    pub k_neighbors: usize,
    pub shrink: f64,
    pub l2_reg: f64,
    pub negatives_per_positive: usize,
    pub optimizer: Optimizer,
    /// Early stopping patience in epochs when a validation monitor is used.
    pub patience: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 1e-3,
            epochs: 30,
            embedding_dim: 64,
            mlp_hidden: vec![64, 32, 16],
            dropout: 0.0,
            k_neighbors: 100,
            shrink: 0.0,
            l2_reg: 1e-4,
            negatives_per_positive: 4,
            optimizer: Optimizer::Adam,
            patience: 5,
        }
    }
}

impl HyperParams {
    pub fn validate(&self, kind: ModelKind) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidHyperParams(m.to_string()));
        match kind {
            ModelKind::ItemKnn => {
                if self.k_neighbors < 1 {
                    return bad("k_neighbors must be at least 1");
                }
                if !(self.shrink >= 0.0) {
                    return bad("shrink must be non-negative");
                }
            }
            ModelKind::Bpr | ModelKind::Ncf => {
                if self.embedding_dim < 1 {
                    return bad("embedding_dim must be at least 1");
                }
                if !(self.learning_rate > 0.0) {
                    return bad("learning_rate must be positive");
                }
                if !(self.l2_reg >= 0.0) {
                    return bad("l2_reg must be non-negative");
                }
                if kind == ModelKind::Ncf {
                    if self.mlp_hidden.is_empty() || self.mlp_hidden.contains(&0) {
                        return bad("mlp_hidden must be a non-empty list of positive widths");
                    }
                    if !(0.0..1.0).contains(&self.dropout) {
                        return bad("dropout must be in [0, 1)");
                    }
                    if self.negatives_per_positive < 1 {
                        return bad("negatives_per_positive must be at least 1");
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "lowercase")]
pub enum RankerState {
    ItemKnn(ItemKnn),
    Bpr(Bpr),
    Ncf(Ncf),
}

/// A trained scoring model over a fixed (user, item) index space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedRanker {
    pub kind: ModelKind,
    pub state: RankerState,
    pub training_seed: u64,
    pub hyperparameters: HyperParams,
    pub n_users: usize,
    pub n_items: usize,
    pub epochs_trained: usize,
}

#[derive(Serialize, Deserialize)]
struct Artifact {
    version: u32,
    model: TrainedRanker,
}

impl TrainedRanker {
    fn check(&self, user: UserIdx, item: ItemIdx) -> Result<(), ModelError> {
        if user.index() >= self.n_users {
            return Err(ModelError::UnknownUser(user.0));
        }
        if item.index() >= self.n_items {
            return Err(ModelError::UnknownItem(item.0));
        }
        Ok(())
    }

    /// Higher means more preferred.
    pub fn score(&self, user: UserIdx, item: ItemIdx) -> Result<f64, ModelError> {
        self.check(user, item)?;
        Ok(match &self.state {
            RankerState::ItemKnn(m) => m.score(user, item),
            RankerState::Bpr(m) => m.score(user, item),
            RankerState::Ncf(m) => m.score(user, item),
        })
    }

    /// Sorts candidates by score, descending; ties go to the lower item index.
    pub fn rank_candidates(&self, user: UserIdx, candidates: &[ItemIdx]) -> Result<RankedList, ModelError> {
        if candidates.is_empty() {
            return Err(ModelError::EmptyCandidates);
        }
        let mut seen = std::collections::HashSet::with_capacity(candidates.len());
        let mut scored = Vec::with_capacity(candidates.len());
        for &item in candidates {
            if !seen.insert(item) {
                return Err(ModelError::DuplicateCandidate(item.0));
            }
            scored.push((self.score(user, item)?, item));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(RankedList::new(
            user,
            scored.into_iter().map(|(_, i)| i).collect(),
            ListSource::Rs,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let err = |reason: String| ModelError::Artifact {
            path: path.display().to_string(),
            reason,
        };
        let artifact = Artifact {
            version: ARTIFACT_VERSION,
            model: self.clone(),
        };
        let bytes = serde_json::to_vec(&artifact).map_err(|e| err(e.to_string()))?;
        std::fs::write(path, bytes).map_err(|e| err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<TrainedRanker, ModelError> {
        let err = |reason: String| ModelError::Artifact {
            path: path.display().to_string(),
            reason,
        };
        let bytes = std::fs::read(path).map_err(|e| err(e.to_string()))?;
        let artifact: Artifact = serde_json::from_slice(&bytes).map_err(|e| err(e.to_string()))?;
        if artifact.version != ARTIFACT_VERSION {
            return Err(err(format!(
                "version {} (expected {ARTIFACT_VERSION})",
                artifact.version
            )));
        }
        Ok(artifact.model)
    }
}

/// A model trained one epoch at a time.
pub trait EpochTrainer {
    fn run_epoch(&mut self);
    fn snapshot(&self) -> TrainedRanker;
}

/// Runs up to `max_epochs`, keeping the snapshot with the best monitor value
/// and stopping after `patience` epochs without improvement.
/// Returns the best snapshot and the per-epoch monitor history.
pub fn fit_with_early_stopping<T: EpochTrainer>(
    trainer: &mut T,
    max_epochs: usize,
    patience: usize,
    mut monitor: impl FnMut(&TrainedRanker) -> f64,
) -> (TrainedRanker, Vec<f64>) {
    let mut best = trainer.snapshot();
    let mut best_value = monitor(&best);
    let mut history = Vec::new();
    let mut stale = 0;
    for _ in 0..max_epochs {
        trainer.run_epoch();
        let snap = trainer.snapshot();
        let value = monitor(&snap);
        history.push(value);
        if value > best_value {
            best_value = value;
            best = snap;
            stale = 0;
        } else {
            stale += 1;
            if stale >= patience.max(1) {
                break;
            }
        }
    }
    (best, history)
}

/// Trains one model of `kind` for exactly `hp.epochs` epochs.
pub fn train(kind: ModelKind, train: &Dataset, hp: &HyperParams, seed: u64) -> Result<TrainedRanker, ModelError> {
    match kind {
        ModelKind::ItemKnn => {
            let mut m = train_itemknn(train, hp.k_neighbors, hp.shrink)?;
            m.training_seed = seed;
            m.hyperparameters = hp.clone();
            Ok(m)
        }
        ModelKind::Bpr => train_bpr(train, hp, seed),
        ModelKind::Ncf => train_ncf(train, hp, seed),
    }
}

/// Per-user sorted train item lists, used for negative sampling.
pub(crate) fn train_items_by_user(train: &Dataset) -> Vec<Vec<u32>> {
    train
        .by_user()
        .into_iter()
        .map(|l| l.into_iter().map(|i| i.item.0).collect())
        .collect()
}

/// Uniform item the user has not interacted with, or None if they rated everything.
pub(crate) fn sample_negative(rng: &mut impl rand::Rng, seen: &[u32], n_items: usize) -> Option<u32> {
    if seen.len() >= n_items {
        return None;
    }
    loop {
        let j = rng.random_range(0..n_items as u32);
        if seen.binary_search(&j).is_err() {
            return Some(j);
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
