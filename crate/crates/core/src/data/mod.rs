//! Rating datasets: ingest, id reindexing, activity filtering and per-user splits.

mod catalog;
mod parse;
mod split;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{parse_item_catalog, ItemCatalog};
pub use parse::parse_ratings;
pub use split::{split_per_user, SplitDataset, SplitRatios};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("empty dataset")]
    Empty,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("no users survive filter (min_count = {0})")]
    NoUsersSurvive(usize),
    #[error("split ratios must be non-negative and sum to 1 (got {0:?})")]
    BadRatios([f64; 3]),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Contiguous user index into a dataset's user table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserIdx(pub u32);

/// Contiguous item index into a dataset's item table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemIdx(pub u32);

impl UserIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ItemIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Ml100k,
    Ml1m,
    Bookcrossing,
}

impl DatasetFormat {
    pub fn rating_scale(self) -> RatingScale {
        match self {
            DatasetFormat::Ml100k | DatasetFormat::Ml1m => RatingScale { min: 1.0, max: 5.0 },
            DatasetFormat::Bookcrossing => RatingScale { min: 0.0, max: 10.0 },
        }
    }

    /// File names of (ratings, item metadata) inside a dataset directory.
    pub fn file_names(self) -> (&'static str, &'static str) {
        match self {
            DatasetFormat::Ml100k => ("u.data", "u.item"),
            DatasetFormat::Ml1m => ("ratings.dat", "movies.dat"),
            DatasetFormat::Bookcrossing => ("BX-Book-Ratings.csv", "BX-Books.csv"),
        }
    }

    /// Lowest rating counted as relevant when binarizing held-out ratings.
    pub fn default_relevance_cutoff(self) -> f64 {
        match self {
            DatasetFormat::Ml100k | DatasetFormat::Ml1m => 4.0,
            DatasetFormat::Bookcrossing => 7.0,
        }
    }

    /// Lowest rating phrased as "liked" in ranking prompts.
    pub fn liked_floor(self) -> f64 {
        match self {
            DatasetFormat::Ml100k | DatasetFormat::Ml1m => 3.0,
            DatasetFormat::Bookcrossing => 6.0,
        }
    }

    /// Noun used for items in prompts.
    pub fn item_noun(self) -> &'static str {
        match self {
            DatasetFormat::Ml100k | DatasetFormat::Ml1m => "movies",
            DatasetFormat::Bookcrossing => "books",
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::Ml100k => "ml100k",
            DatasetFormat::Ml1m => "ml1m",
            DatasetFormat::Bookcrossing => "bookcrossing",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl RatingScale {
    pub fn contains(&self, rating: f64) -> bool {
        rating >= self.min && rating <= self.max
    }
}

/// Orders ids numerically when both parse as integers, otherwise lexically.
/// Numeric ids sort before non-numeric ones.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Bijection between external ids and contiguous indices, in ascending id order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdIndex {
    ids: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl IdIndex {
    pub fn from_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        ids.sort_by(|a, b| compare_ids(a, b));
        ids.dedup();
        let lookup = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        IdIndex { ids, lookup }
    }

    pub fn encode(&self, id: &str) -> Option<u32> {
        self.lookup.get(id).copied()
    }

    pub fn decode(&self, index: u32) -> Option<&str> {
        self.ids.get(index as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// One explicit rating.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: UserIdx,
    pub item: ItemIdx,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Display title of an item, flagged when it had to be synthesized.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Title {
    pub text: String,
    pub fallback: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub duplicates_dropped: usize,
    pub fallback_titles: usize,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    interactions: Vec<Interaction>,
    users: Arc<IdIndex>,
    items: Arc<IdIndex>,
    catalog: Arc<ItemCatalog>,
    format: DatasetFormat,
    scale: RatingScale,
    duplicates_dropped: usize,
}

/// Raw parsed row before reindexing.
pub(crate) struct RawRating {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

impl Dataset {
    pub(crate) fn from_raw(
        rows: Vec<RawRating>,
        format: DatasetFormat,
        duplicates_dropped: usize,
    ) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::Empty);
        }
        let users = IdIndex::from_ids(rows.iter().map(|r| r.user.as_str()));
        let items = IdIndex::from_ids(rows.iter().map(|r| r.item.as_str()));
        let interactions = rows
            .iter()
            .map(|r| Interaction {
                user: UserIdx(users.encode(&r.user).expect("indexed")),
                item: ItemIdx(items.encode(&r.item).expect("indexed")),
                rating: r.rating,
                timestamp: r.timestamp,
            })
            .collect();
        Ok(Dataset {
            interactions,
            users: Arc::new(users),
            items: Arc::new(items),
            catalog: Arc::new(ItemCatalog::default()),
            format,
            scale: format.rating_scale(),
            duplicates_dropped,
        })
    }

    /// Same index space, different interactions.
    pub(crate) fn with_interactions(&self, interactions: Vec<Interaction>) -> Dataset {
        Dataset {
            interactions,
            users: Arc::clone(&self.users),
            items: Arc::clone(&self.items),
            catalog: Arc::clone(&self.catalog),
            format: self.format,
            scale: self.scale,
            duplicates_dropped: self.duplicates_dropped,
        }
    }

    /// Rebuilds the index space from the retained interactions only.
    pub(crate) fn reindexed(&self, kept: Vec<Interaction>) -> Dataset {
        let users = IdIndex::from_ids(kept.iter().map(|i| self.user_id(i.user)));
        let items = IdIndex::from_ids(kept.iter().map(|i| self.item_id(i.item)));
        let interactions = kept
            .iter()
            .map(|i| Interaction {
                user: UserIdx(users.encode(self.user_id(i.user)).expect("kept user")),
                item: ItemIdx(items.encode(self.item_id(i.item)).expect("kept item")),
                rating: i.rating,
                timestamp: i.timestamp,
            })
            .collect();
        Dataset {
            interactions,
            users: Arc::new(users),
            items: Arc::new(items),
            catalog: Arc::clone(&self.catalog),
            format: self.format,
            scale: self.scale,
            duplicates_dropped: self.duplicates_dropped,
        }
    }

    pub fn with_catalog(mut self, catalog: ItemCatalog) -> Dataset {
        self.catalog = Arc::new(catalog);
        self
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// M
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    /// N
    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn format(&self) -> DatasetFormat {
        self.format
    }

    pub fn rating_scale(&self) -> RatingScale {
        self.scale
    }

    pub fn user_index(&self) -> &IdIndex {
        &self.users
    }

    pub fn item_index(&self) -> &IdIndex {
        &self.items
    }

    pub fn user_id(&self, user: UserIdx) -> &str {
        self.users.decode(user.0).expect("user index in range")
    }

    pub fn item_id(&self, item: ItemIdx) -> &str {
        self.items.decode(item.0).expect("item index in range")
    }

    pub fn lookup_user(&self, id: &str) -> Option<UserIdx> {
        self.users.encode(id).map(UserIdx)
    }

    pub fn lookup_item(&self, id: &str) -> Option<ItemIdx> {
        self.items.encode(id).map(ItemIdx)
    }

    pub fn catalog(&self) -> &ItemCatalog {
        &self.catalog
    }

    pub fn title(&self, item: ItemIdx) -> Title {
        let id = self.item_id(item);
        match self.catalog.get(id) {
            Some(text) => Title {
                text: text.to_string(),
                fallback: self.catalog.is_flagged(id),
            },
            None => Title {
                text: format!("item-{id}"),
                fallback: true,
            },
        }
    }

    pub fn fallback_title_count(&self) -> usize {
        (0..self.n_items() as u32)
            .filter(|&i| self.title(ItemIdx(i)).fallback)
            .count()
    }

    /// Per-user interactions, each list sorted by item index.
    pub fn by_user(&self) -> Vec<Vec<Interaction>> {
        let mut lists = vec![Vec::new(); self.n_users()];
        for it in &self.interactions {
            lists[it.user.index()].push(*it);
        }
        for list in &mut lists {
            list.sort_by_key(|i| i.item);
        }
        lists
    }

    pub fn user_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_users()];
        for it in &self.interactions {
            counts[it.user.index()] += 1;
        }
        counts
    }

    pub fn ingest_summary(&self) -> IngestSummary {
        IngestSummary {
            users: self.n_users(),
            items: self.n_items(),
            interactions: self.len(),
            duplicates_dropped: self.duplicates_dropped,
            fallback_titles: self.fallback_title_count(),
        }
    }
}

/// Drops users with fewer than `min_count` interactions, then items left
/// without interactions, repeating until nothing changes.
pub fn filter_min_interactions(dataset: &Dataset, min_count: usize) -> Result<Dataset, DataError> {
    let mut current = dataset.clone();
    loop {
        let counts = current.user_counts();
        let kept: Vec<Interaction> = current
            .interactions
            .iter()
            .filter(|i| counts[i.user.index()] >= min_count)
            .copied()
            .collect();
        if kept.is_empty() {
            return Err(DataError::NoUsersSurvive(min_count));
        }
        let next = current.reindexed(kept);
        let stable = next.n_users() == current.n_users() && next.n_items() == current.n_items();
        current = next;
        if stable {
            return Ok(current);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(counts: &[usize]) -> Dataset {
        let mut rows = Vec::new();
        for (u, &n) in counts.iter().enumerate() {
            for i in 0..n {
                rows.push(RawRating {
                    user: format!("{}", u + 1),
                    item: format!("{}", i + 1 + u * 1000),
                    rating: 3.0,
                    timestamp: None,
                });
            }
        }
        Dataset::from_raw(rows, DatasetFormat::Ml100k, 0).unwrap()
    }

    #[test]
    fn ids_sort_numerically() {
        let idx = IdIndex::from_ids(["10", "9", "abc", "100", "9"]);
        assert_eq!(idx.ids(), &["9", "10", "100", "abc"]);
        for (i, id) in idx.ids().iter().enumerate() {
            assert_eq!(idx.encode(id), Some(i as u32));
            assert_eq!(idx.decode(i as u32), Some(id.as_str()));
        }
    }

    #[test]
    fn filter_keeps_users_at_threshold() {
        let ds = fixture(&[25, 19, 20]);
        let f = filter_min_interactions(&ds, 20).unwrap();
        assert_eq!(f.n_users(), 2);
        assert_eq!(f.n_items(), 45);
        assert_eq!(f.len(), 45);
        assert_eq!(f.lookup_user("2"), None);
    }

    #[test]
    fn filter_zero_is_identity() {
        let ds = fixture(&[3, 1, 2]);
        let f = filter_min_interactions(&ds, 0).unwrap();
        assert_eq!(f.n_users(), ds.n_users());
        assert_eq!(f.n_items(), ds.n_items());
        assert_eq!(f.interactions(), ds.interactions());
    }

    #[test]
    fn filter_everything_is_an_error() {
        let ds = fixture(&[3, 1]);
        assert!(matches!(
            filter_min_interactions(&ds, 5),
            Err(DataError::NoUsersSurvive(5))
        ));
    }

    #[test]
    fn missing_catalog_entries_fall_back() {
        let ds = fixture(&[2]);
        let t = ds.title(ItemIdx(0));
        assert_eq!(t.text, "item-1");
        assert!(t.fallback);
        assert_eq!(ds.ingest_summary().fallback_titles, 2);
    }
}
