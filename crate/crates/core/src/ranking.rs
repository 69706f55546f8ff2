use serde::{Deserialize, Serialize};

use crate::data::{ItemIdx, UserIdx};

/// Where a served list came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListSource {
    Rs,
    Llm,
    RsFallback,
}

impl ListSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ListSource::Rs => "rs",
            ListSource::Llm => "llm",
            ListSource::RsFallback => "rs_fallback",
        }
    }
}

/// Ordered, de-duplicated items for one user.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedList {
    pub user: UserIdx,
    pub items: Vec<ItemIdx>,
    pub source: ListSource,
}

impl RankedList {
    pub fn new(user: UserIdx, items: Vec<ItemIdx>, source: ListSource) -> Self {
        debug_assert!(
            {
                let mut s = items.clone();
                s.sort();
                s.windows(2).all(|w| w[0] != w[1])
            },
            "ranked list contains duplicates"
        );
        RankedList { user, items, source }
    }

    /// True when both lists hold the same set of items.
    pub fn same_items(&self, other: &RankedList) -> bool {
        let mut a = self.items.clone();
        let mut b = other.items.clone();
        a.sort();
        b.sort();
        a == b
    }
}
