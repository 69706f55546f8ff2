use hybridrank::data::{parse_ratings, Dataset, DatasetFormat, ItemIdx, UserIdx};
use hybridrank::eval::user_auc;
use hybridrank::models::{train, train_bpr, train_ncf, HyperParams, ModelKind, TrainedRanker};

/// Users 1..=20 rate items 1..=5, users 21..=40 rate items 6..=10.
fn two_blocks() -> Dataset {
    let mut text = String::new();
    for u in 1..=40 {
        let block = if u <= 20 { 1..=5 } else { 6..=10 };
        for i in block {
            text.push_str(&format!("{u}\t{i}\t{}\t0\n", 3 + (u + i) % 3));
        }
    }
    parse_ratings(text.as_bytes(), DatasetFormat::Ml100k).unwrap()
}

fn own_and_other(ds: &Dataset, u: UserIdx) -> (Vec<ItemIdx>, Vec<ItemIdx>) {
    let first_block = ds.user_id(u).parse::<u32>().unwrap() <= 20;
    (0..ds.n_items() as u32)
        .map(ItemIdx)
        .partition(|&i| (ds.item_id(i).parse::<u32>().unwrap() <= 5) == first_block)
}

fn mean_auc(ds: &Dataset, m: &TrainedRanker) -> f64 {
    let mut total = 0.0;
    for u in 0..ds.n_users() as u32 {
        let u = UserIdx(u);
        let (own, other) = own_and_other(ds, u);
        let pos: Vec<f64> = own.iter().map(|&i| m.score(u, i).unwrap()).collect();
        let neg: Vec<f64> = other.iter().map(|&i| m.score(u, i).unwrap()).collect();
        total += user_auc(&pos, &neg).unwrap();
    }
    total / ds.n_users() as f64
}

fn pairwise_accuracy(ds: &Dataset, m: &TrainedRanker) -> f64 {
    let (mut right, mut all) = (0usize, 0usize);
    for u in 0..ds.n_users() as u32 {
        let u = UserIdx(u);
        let (own, other) = own_and_other(ds, u);
        for &i in &own {
            for &j in &other {
                all += 1;
                right += (m.score(u, i).unwrap() > m.score(u, j).unwrap()) as usize;
            }
        }
    }
    right as f64 / all as f64
}

fn hp(epochs: usize) -> HyperParams {
    HyperParams {
        learning_rate: 0.01,
        epochs,
        embedding_dim: 8,
        mlp_hidden: vec![16, 8],
        ..HyperParams::default()
    }
}

#[test]
fn bpr_recovers_planted_blocks() {
    let ds = two_blocks();
    let m = train_bpr(&ds, &hp(60), 7).unwrap();
    assert!(pairwise_accuracy(&ds, &m) >= 0.95);
    assert!(mean_auc(&ds, &m) >= 0.9);
}

#[test]
fn untrained_bpr_is_near_chance() {
    let ds = two_blocks();
    let m = train_bpr(&ds, &hp(0), 7).unwrap();
    assert!((mean_auc(&ds, &m) - 0.5).abs() <= 0.05, "{}", mean_auc(&ds, &m));
}

#[test]
fn ncf_recovers_planted_blocks() {
    let ds = two_blocks();
    let m = train_ncf(&ds, &hp(40), 7).unwrap();
    assert!(pairwise_accuracy(&ds, &m) >= 0.9, "{}", pairwise_accuracy(&ds, &m));
    for u in 0..ds.n_users() as u32 {
        let s = m.score(UserIdx(u), ItemIdx(0)).unwrap();
        assert!(s > 0.0 && s < 1.0);
    }
}

#[test]
fn itemknn_separates_blocks() {
    let ds = two_blocks();
    let m = train(ModelKind::ItemKnn, &ds, &HyperParams::default(), 0).unwrap();
    // other-block items share no raters, so they score exactly zero
    assert!(mean_auc(&ds, &m) > 0.99);
}

#[test]
fn retraining_is_bit_identical() {
    let ds = two_blocks();
    for kind in [ModelKind::ItemKnn, ModelKind::Bpr, ModelKind::Ncf] {
        let a = train(kind, &ds, &hp(3), 42).unwrap();
        let b = train(kind, &ds, &hp(3), 42).unwrap();
        assert_eq!(a, b, "{kind:?}");
    }
}

#[test]
fn bpr_scores_ignore_candidate_order() {
    let ds = two_blocks();
    let m = train_bpr(&ds, &hp(5), 1).unwrap();
    let items: Vec<ItemIdx> = (0..10).map(ItemIdx).collect();
    let mut rev = items.clone();
    rev.reverse();
    let a = m.rank_candidates(UserIdx(3), &items).unwrap();
    let b = m.rank_candidates(UserIdx(3), &rev).unwrap();
    assert_eq!(a.items, b.items);
}
