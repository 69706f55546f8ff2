use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use super::parse::read_all;
use super::{DataError, DatasetFormat};

/// Item id to display title.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ItemCatalog {
    titles: BTreeMap<String, String>,
    flagged: BTreeSet<String>,
}

impl ItemCatalog {
    pub fn get(&self, id: &str) -> Option<&str> {
        self.titles.get(id).map(String::as_str)
    }

    /// True when the stored title is a synthesized `item-<id>` fallback.
    pub fn is_flagged(&self, id: &str) -> bool {
        self.flagged.contains(id)
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.len()
    }

    pub fn len(&self) -> usize {
        self.titles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.titles.is_empty()
    }

    fn insert(&mut self, id: &str, title: &str) {
        if self.titles.contains_key(id) {
            return;
        }
        let title = title.trim();
        if title.is_empty() {
            self.titles.insert(id.to_string(), format!("item-{id}"));
            self.flagged.insert(id.to_string());
        } else {
            self.titles.insert(id.to_string(), title.to_string());
        }
    }
}

impl FromIterator<(String, String)> for ItemCatalog {
    fn from_iter<T: IntoIterator<Item = (String, String)>>(iter: T) -> Self {
        let mut catalog = ItemCatalog::default();
        for (id, title) in iter {
            catalog.insert(&id, &title);
        }
        catalog
    }
}

/// Parses the item metadata file of a dataset family. Duplicate ids keep the
/// first title; empty titles become `item-<id>` and are flagged.
pub fn parse_item_catalog(source: impl Read, format: DatasetFormat) -> Result<ItemCatalog, DataError> {
    let text = read_all(source, "item catalog")?;
    let mut catalog = ItemCatalog::default();
    match format {
        DatasetFormat::Ml100k => {
            for line in text.lines() {
                let mut fields = line.trim_end_matches('\r').splitn(3, '|');
                if let (Some(id), Some(title)) = (fields.next(), fields.next()) {
                    if !id.trim().is_empty() {
                        catalog.insert(id.trim(), title);
                    }
                }
            }
        }
        DatasetFormat::Ml1m => {
            for line in text.lines() {
                let mut fields = line.trim_end_matches('\r').splitn(3, "::");
                if let (Some(id), Some(title)) = (fields.next(), fields.next()) {
                    if !id.trim().is_empty() {
                        catalog.insert(id.trim(), title);
                    }
                }
            }
        }
        DatasetFormat::Bookcrossing => {
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(b';')
                .has_headers(true)
                .flexible(true)
                .escape(Some(b'\\'))
                .from_reader(text.as_bytes());
            for record in reader.records() {
                let Ok(record) = record else {
                    log::warn!("skipping unreadable book catalog record");
                    continue;
                };
                if let (Some(id), Some(title)) = (record.get(0), record.get(1)) {
                    if !id.trim().is_empty() {
                        catalog.insert(id.trim(), &title.replace("&amp;", "&"));
                    }
                }
            }
        }
    }
    Ok(catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_ratings, ItemIdx};

    #[test]
    fn ml100k_title_extraction() {
        let cat = parse_item_catalog(
            "1|Toy Story (1995)|01-Jan-1995||http://us.imdb.com/M/title-exact?Toy%20Story%20(1995)|0|0|0|1\n".as_bytes(),
            DatasetFormat::Ml100k,
        )
        .unwrap();
        assert_eq!(cat.get("1"), Some("Toy Story (1995)"));
        assert!(!cat.is_flagged("1"));
    }

    #[test]
    fn empty_title_is_flagged() {
        let cat = parse_item_catalog("267|unknown||\n268||x|\n".as_bytes(), DatasetFormat::Ml100k).unwrap();
        assert_eq!(cat.get("268"), Some("item-268"));
        assert!(cat.is_flagged("268"));
        assert_eq!(cat.flagged_count(), 1);
    }

    #[test]
    fn duplicate_ids_keep_first() {
        let cat = parse_item_catalog("1::Heat (1995)::Action\n1::Other::Drama\n".as_bytes(), DatasetFormat::Ml1m).unwrap();
        assert_eq!(cat.get("1"), Some("Heat (1995)"));
    }

    #[test]
    fn latin1_titles_decode() {
        let bytes = b"1|Caf\xe9 au lait (1993)|x\n";
        let cat = parse_item_catalog(&bytes[..], DatasetFormat::Ml100k).unwrap();
        assert_eq!(cat.get("1"), Some("Caf\u{e9} au lait (1993)"));
    }

    #[test]
    fn uncovered_item_counts_as_fallback() {
        let cat = parse_item_catalog("10|Dune (1984)|\n".as_bytes(), DatasetFormat::Ml100k).unwrap();
        let ds = parse_ratings("1 10 5 0\n1 11 3 0\n".as_bytes(), DatasetFormat::Ml100k)
            .unwrap()
            .with_catalog(cat);
        assert_eq!(ds.title(ItemIdx(0)).text, "Dune (1984)");
        assert_eq!(ds.title(ItemIdx(1)).text, "item-11");
        assert!(ds.ingest_summary().fallback_titles >= 1);
    }

    #[test]
    fn bookcrossing_catalog() {
        let text = "\"ISBN\";\"Book-Title\";\"Book-Author\"\n\"0195153448\";\"Classical Mythology\";\"Mark P. O. Morford\"\n\"0002005018\";\"Clara Callan &amp; Co\";\"Richard Bruce Wright\"\n";
        let cat = parse_item_catalog(text.as_bytes(), DatasetFormat::Bookcrossing).unwrap();
        assert_eq!(cat.get("0195153448"), Some("Classical Mythology"));
        assert_eq!(cat.get("0002005018"), Some("Clara Callan & Co"));
    }
}
