use serde::{Deserialize, Serialize};

use crate::data::SplitDataset;
use crate::eval::{assess_users, mean_defined_auc, Holdout, PoolBuilder, Thresholds};
use crate::models::{
    fit_with_early_stopping, BprTrainer, HyperParams, ItemKnn, ModelError, ModelKind, NcfTrainer, TrainedRanker,
};

pub const ITEMKNN_K_GRID: [usize; 7] = [10, 50, 100, 200, 250, 300, 400];
pub const ITEMKNN_SHRINK_GRID: [f64; 5] = [0.0, 0.1, 0.5, 1.0, 2.0];
pub const BPR_LR_GRID: [f64; 7] = [5e-5, 1e-4, 5e-4, 7e-4, 1e-3, 5e-3, 7e-3];
pub const NCF_LR_GRID: [f64; 6] = [5e-7, 1e-6, 5e-6, 1e-5, 1e-4, 1e-3];
pub const NCF_DROPOUT_GRID: [f64; 3] = [0.0, 0.1, 0.3];
pub const NCF_MLP_HIDDEN: [usize; 3] = [64, 32, 16];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTrial {
    pub hyperparameters: HyperParams,
    pub validation_auc: f64,
    pub epochs_trained: usize,
}

/// A fitted model plus how it was chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: TrainedRanker,
    pub validation_auc: f64,
    /// Every configuration tried, in grid order; a single entry without a grid.
    pub trials: Vec<GridTrial>,
}

/// Mean validation-pool AUC over users where it is defined.
pub fn validation_auc(pools: &PoolBuilder, thresholds: &Thresholds, seed: u64, model: &TrainedRanker) -> f64 {
    let a = assess_users(pools, Holdout::Validation, thresholds, seed, |u, i| {
        model.score(u, i).expect("pool items are in range")
    });
    mean_defined_auc(&a).0
}

/// Configurations of the standard grid for `kind`, built on top of `base`.
pub fn grid(kind: ModelKind, base: &HyperParams) -> Vec<HyperParams> {
    match kind {
        ModelKind::ItemKnn => ITEMKNN_SHRINK_GRID
            .iter()
            .flat_map(|&shrink| {
                ITEMKNN_K_GRID.iter().map(move |&k| HyperParams {
                    k_neighbors: k,
                    shrink,
                    ..base.clone()
                })
            })
            .collect(),
        ModelKind::Bpr => BPR_LR_GRID
            .iter()
            .map(|&lr| HyperParams {
                learning_rate: lr,
                ..base.clone()
            })
            .collect(),
        ModelKind::Ncf => NCF_LR_GRID
            .iter()
            .flat_map(|&lr| {
                NCF_DROPOUT_GRID.iter().map(move |&dropout| HyperParams {
                    learning_rate: lr,
                    dropout,
                    mlp_hidden: NCF_MLP_HIDDEN.to_vec(),
                    ..base.clone()
                })
            })
            .collect(),
    }
}

fn fit_one(
    kind: ModelKind,
    split: &SplitDataset,
    pools: &PoolBuilder,
    thresholds: &Thresholds,
    hp: &HyperParams,
    train_seed: u64,
    negatives_seed: u64,
) -> Result<TrainedRanker, ModelError> {
    hp.validate(kind)?;
    let monitor = |m: &TrainedRanker| validation_auc(pools, thresholds, negatives_seed, m);
    Ok(match kind {
        ModelKind::ItemKnn => {
            let mut m = crate::models::train_itemknn(&split.train, hp.k_neighbors, hp.shrink)?;
            m.training_seed = train_seed;
            m.hyperparameters = hp.clone();
            m
        }
        ModelKind::Bpr => {
            let mut t = BprTrainer::new(&split.train, hp, train_seed)?;
            fit_with_early_stopping(&mut t, hp.epochs, hp.patience, monitor).0
        }
        ModelKind::Ncf => {
            let mut t = NcfTrainer::new(&split.train, hp, train_seed)?;
            fit_with_early_stopping(&mut t, hp.epochs, hp.patience, monitor).0
        }
    })
}

/// Trains `kind` with `hp`, or searches the grid around it and keeps the
/// configuration with the best validation AUC (first one on ties).
/// Epoch-trained models stop early on a validation plateau.
pub fn fit_model(
    kind: ModelKind,
    split: &SplitDataset,
    thresholds: &Thresholds,
    hp: &HyperParams,
    use_grid: bool,
    train_seed: u64,
    negatives_seed: u64,
) -> Result<TrainOutcome, ModelError> {
    let pools = PoolBuilder::new(split);
    let configs = if use_grid { grid(kind, hp) } else { vec![hp.clone()] };
    let mut trials = Vec::with_capacity(configs.len());
    let mut best: Option<(TrainedRanker, f64)> = None;

    // ItemKNN: one similarity pass per shrink value, truncated for each k.
    let mut knn_cache: Option<(f64, ItemKnn)> = None;
    let max_k = configs.iter().map(|c| c.k_neighbors).max().unwrap_or(1);

    for cfg in configs {
        let model = if kind == ModelKind::ItemKnn && use_grid {
            cfg.validate(kind)?;
            if knn_cache.as_ref().is_none_or(|(s, _)| *s != cfg.shrink) {
                knn_cache = Some((cfg.shrink, ItemKnn::fit(&split.train, max_k, cfg.shrink)));
            }
            let knn = knn_cache.as_ref().expect("just filled").1.truncated(cfg.k_neighbors);
            let mut m = knn.into_ranker(split.train.n_users(), split.train.n_items());
            m.training_seed = train_seed;
            m.hyperparameters = cfg.clone();
            m
        } else {
            fit_one(kind, split, &pools, thresholds, &cfg, train_seed, negatives_seed)?
        };
        let auc = validation_auc(&pools, thresholds, negatives_seed, &model);
        log::info!("{} {:?}: validation AUC {auc:.5}", kind.as_str(), cfg);
        trials.push(GridTrial {
            hyperparameters: cfg,
            validation_auc: auc,
            epochs_trained: model.epochs_trained,
        });
        if best.as_ref().is_none_or(|(_, b)| auc > *b) {
            best = Some((model, auc));
        }
    }
    let (model, validation_auc) = best.expect("grid is never empty");
    Ok(TrainOutcome {
        model,
        validation_auc,
        trials,
    })
}
