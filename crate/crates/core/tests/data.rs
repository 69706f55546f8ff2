mod common;

use std::collections::HashSet;
use std::fs::File;

use hybridrank::data::{parse_item_catalog, parse_ratings, split_per_user, Dataset, DatasetFormat, SplitRatios};
use hybridrank::eval::mean_sparsity_threshold;

fn ml100k() -> Option<Dataset> {
    let Some(dir) = common::ml100k_dir() else {
        eprintln!("ML-100k not found; set HYBRIDRANK_ML100K_DIR to run this test");
        return None;
    };
    let ds = parse_ratings(File::open(dir.join("u.data")).unwrap(), DatasetFormat::Ml100k).unwrap();
    let catalog = parse_item_catalog(File::open(dir.join("u.item")).unwrap(), DatasetFormat::Ml100k).unwrap();
    Some(ds.with_catalog(catalog))
}

#[test]
fn ml100k_shape() {
    let Some(ds) = ml100k() else { return };
    let s = ds.ingest_summary();
    assert_eq!((s.users, s.items, s.interactions), (943, 1682, 100_000));
    assert_eq!(s.duplicates_dropped, 0);
    assert_eq!(s.fallback_titles, 0);
    let expected = 100_000.0 / (943.0 * 1682.0);
    assert!((mean_sparsity_threshold(&ds) - expected).abs() < 1e-9);
    assert!(ds.user_counts().iter().all(|&c| c >= 20));
}

#[test]
fn ml100k_titles_decode_latin1() {
    let Some(ds) = ml100k() else { return };
    let item = ds.lookup_item("1").unwrap();
    assert_eq!(ds.title(item).text, "Toy Story (1995)");
    assert!((0..ds.n_items() as u32).any(|i| ds.title(hybridrank::data::ItemIdx(i)).text.contains('é')));
}

#[test]
fn ml100k_split_partitions_each_user() {
    let Some(ds) = ml100k() else { return };
    let split = split_per_user(&ds, SplitRatios::default(), 42).unwrap();
    assert_eq!(split.train.len() + split.validation.len() + split.test.len(), 100_000);
    let (train, val, test) = (split.train.user_counts(), split.validation.user_counts(), split.test.user_counts());
    for (u, &n) in ds.user_counts().iter().enumerate() {
        assert_eq!(train[u] + val[u] + test[u], n);
        assert!(test[u] >= 1 && val[u] >= 1);
    }
    let key = |d: &Dataset| -> HashSet<(u32, u32)> { d.interactions().iter().map(|i| (i.user.0, i.item.0)).collect() };
    assert!(key(&split.train).is_disjoint(&key(&split.test)));
    let again = split_per_user(&ds, SplitRatios::default(), 42).unwrap();
    assert_eq!(split.test.interactions(), again.test.interactions());
}
