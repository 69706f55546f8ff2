#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The real ML-100k files, if present.
pub fn ml100k_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("HYBRIDRANK_ML100K_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k"));
    dir.join("u.data").is_file().then_some(dir)
}

/// Writes a small ML-100k-shaped dataset: two taste groups, activity from
/// 20 to 60 ratings, and some rating noise so a few sparse users rank badly.
pub fn write_synthetic(dir: &Path, n_users: u32, n_items: u32, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = String::new();
    for u in 1..=n_users {
        let group = u % 2;
        let count = rng.random_range(20..=60.min(n_items as usize));
        let items = rand::seq::index::sample(&mut rng, n_items as usize, count);
        for (t, i) in items.into_iter().enumerate() {
            let item = i as u32 + 1;
            let liked = (item % 2 == group) ^ (rng.random::<f64>() < 0.25);
            let rating = if liked { rng.random_range(4..=5) } else { rng.random_range(1..=3) };
            data.push_str(&format!("{u}\t{item}\t{rating}\t{}\n", 880000000 + t));
        }
    }
    std::fs::write(dir.join("u.data"), data).unwrap();
    let mut items = String::new();
    for i in 1..=n_items {
        items.push_str(&format!("{i}|Synthetic Film {i} (19{:02})|01-Jan-1990||http://x|0|0\n", i % 100));
    }
    std::fs::write(dir.join("u.item"), items).unwrap();
}

/// Config JSON over `data_dir` writing into `out_dir`, with an ItemKNN model.
pub fn config_json(data_dir: &Path, out_dir: &Path, mock: &str, extra: &str) -> String {
    format!(
        r#"{{
  "dataset": {{"path": {data}, "format": "ml100k"}},
  "model": {{"kind": "itemknn", "hyperparameters": {{"k_neighbors": 20}}}},
  "llm": {{"mode": "mock", "mock": {mock}}},
  "output_dir": {out}{extra}
}}"#,
        data = serde_json::to_string(data_dir).unwrap(),
        out = serde_json::to_string(out_dir).unwrap(),
    )
}
