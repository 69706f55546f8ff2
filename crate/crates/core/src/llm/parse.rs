use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

static ENTRY_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|\s)\d{1,4}[.)]\s+").unwrap());
static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*[-*•]\s+").unwrap());
static INVERTED_ARTICLE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(.+), (the|a|an|la|le|les|il|el|das|der|die|l')(\s*\(\d{4}\))?$").unwrap()
});
static TRAILING_YEAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s*\(\d{4}\)$").unwrap());

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("response mentions none of the candidates")]
pub struct ParseFailure;

/// Parsed order as indices into the candidate list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedRanking {
    pub order: Vec<usize>,
    /// Candidates placed from the response text.
    pub matched: usize,
    /// Response entries that named no candidate.
    pub dropped: Vec<String>,
}

/// Case-folded, whitespace-collapsed title with markdown emphasis removed and
/// a trailing ", The"-style article moved to the front.
pub fn normalize_title(title: &str) -> String {
    let s = title
        .trim()
        .trim_matches(|c: char| matches!(c, '*' | '_' | '"' | '`' | '\''))
        .to_lowercase();
    let s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    match INVERTED_ARTICLE.captures(&s) {
        Some(c) => format!(
            "{} {}{}",
            &c[2],
            &c[1],
            c.get(3).map_or("", |m| m.as_str())
        ),
        None => s,
    }
}

fn strip_year(key: &str) -> &str {
    TRAILING_YEAR.find(key).map_or(key, |m| &key[..m.start()])
}

/// Numbered entries, one list item each; unnumbered lines count as entries too.
fn entries(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let marks: Vec<_> = ENTRY_MARKER.find_iter(line).collect();
        if marks.is_empty() {
            let l = BULLET.replace(line, "");
            if !l.trim().is_empty() {
                out.push(l.trim().to_string());
            }
            continue;
        }
        let head = line[..marks[0].start()].trim();
        if !head.is_empty() {
            out.push(head.to_string());
        }
        for (k, m) in marks.iter().enumerate() {
            let end = marks.get(k + 1).map_or(line.len(), |n| n.start());
            let body = line[m.end()..end].trim();
            if !body.is_empty() {
                out.push(body.to_string());
            }
        }
    }
    out
}

/// Byte offset of the first occurrence of `needle` in `hay` not embedded in a longer word.
fn find_phrase(hay: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let word = |c: Option<char>| c.is_some_and(char::is_alphanumeric);
    hay.match_indices(needle).map(|(p, _)| p).find(|&p| {
        !word(hay[..p].chars().next_back()) && !word(hay[p + needle.len()..].chars().next())
    })
}

struct Keys {
    full: Vec<String>,
    short: Vec<String>,
}

impl Keys {
    fn new(candidates: &[String]) -> Keys {
        let full: Vec<String> = candidates.iter().map(|c| normalize_title(c)).collect();
        let short = full.iter().map(|f| strip_year(f).to_string()).collect();
        Keys { full, short }
    }

    fn unique(&self, hits: impl Iterator<Item = usize>) -> Option<usize> {
        let hits: Vec<usize> = hits.collect();
        (hits.len() == 1).then(|| hits[0])
    }

    fn match_entry(&self, entry: &str) -> Option<usize> {
        let e = normalize_title(entry);
        let n = self.full.len();
        if let Some(i) = self.unique((0..n).filter(|&i| self.full[i] == e)) {
            return Some(i);
        }
        let es = strip_year(&e);
        if let Some(i) = self.unique((0..n).filter(|&i| self.short[i] == es)) {
            return Some(i);
        }
        let lens: Vec<usize> = (0..n)
            .map(|i| {
                if find_phrase(&e, &self.full[i]).is_some() {
                    self.full[i].len()
                } else if find_phrase(&e, &self.short[i]).is_some() {
                    self.short[i].len()
                } else {
                    0
                }
            })
            .collect();
        let best = *lens.iter().max()?;
        if best == 0 {
            return None;
        }
        self.unique((0..n).filter(|&i| lens[i] == best))
    }

    /// Candidates in order of first appearance anywhere in `text`.
    fn scan(&self, text: &str) -> Vec<usize> {
        let t = text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
        let mut found: Vec<(usize, std::cmp::Reverse<usize>, usize)> = (0..self.full.len())
            .filter_map(|i| {
                find_phrase(&t, &self.full[i])
                    .map(|p| (p, std::cmp::Reverse(self.full[i].len()), i))
                    .or_else(|| find_phrase(&t, &self.short[i]).map(|p| (p, std::cmp::Reverse(self.short[i].len()), i)))
            })
            .collect();
        found.sort();
        found.into_iter().map(|(_, _, i)| i).collect()
    }
}

/// Reads a ranked list of candidate titles out of free text.
///
/// Candidates are placed in the order they are first named; entries naming no
/// candidate are dropped; candidates never named follow in `fallback_order`.
/// Fails only when not a single candidate is named.
pub fn parse_ranked_response(
    text: &str,
    candidates: &[String],
    fallback_order: &[String],
) -> Result<ParsedRanking, ParseFailure> {
    let keys = Keys::new(candidates);
    let mut placed = vec![false; candidates.len()];
    let mut order = Vec::with_capacity(candidates.len());
    let mut dropped = Vec::new();
    for entry in entries(text) {
        match keys.match_entry(&entry) {
            Some(i) if !placed[i] => {
                placed[i] = true;
                order.push(i);
            }
            Some(_) => {}
            None => dropped.push(entry),
        }
    }
    if order.is_empty() {
        for i in keys.scan(text) {
            placed[i] = true;
            order.push(i);
        }
        if order.is_empty() {
            return Err(ParseFailure);
        }
    }
    let matched = order.len();

    let index: HashMap<&str, usize> = candidates.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    debug_assert_eq!(fallback_order.len(), candidates.len(), "fallback must permute candidates");
    for title in fallback_order {
        let i = index[title.as_str()];
        if !placed[i] {
            placed[i] = true;
            order.push(i);
        }
    }
    Ok(ParsedRanking { order, matched, dropped })
}
