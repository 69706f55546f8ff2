//! Re-ranking a weak user's candidates with a language model: instruction
//! building, the chat-completion client, response parsing and mock models.

mod client;
mod mock;
mod parse;

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Interaction, ItemIdx, SplitDataset, UserIdx};

pub use client::{complete_batch, Completion, LlmClient, LlmEndpoint, LlmError, RetryPolicy, API_KEY_ENV};
pub use mock::{mock_complete, MockKind, MockLlm};
pub use parse::{normalize_title, parse_ranked_response, ParseFailure, ParsedRanking};

pub const TEMPLATE_VERSION: &str = "ranking_v1";
const TEMPLATE: &str = include_str!("../../templates/ranking_v1.txt");
pub const DEFAULT_HISTORY_CAP: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum InstructionError {
    #[error("nothing to rank for user {0}")]
    NothingToRank(String),
    #[error("user {0} has no training interactions to condition on")]
    NoHistory(String),
    #[error("user index {0} out of range")]
    UnknownUser(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub item: ItemIdx,
    pub title: String,
    pub rating: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub item: ItemIdx,
    pub title: String,
}

/// One user's ranking prompt and the pieces it was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub user: UserIdx,
    pub user_id: String,
    /// Most preferred first.
    pub history: Vec<HistoryEntry>,
    /// In the shuffled order shown to the model.
    pub candidates: Vec<Candidate>,
    pub rendered_text: String,
    pub shuffle_seed: u64,
    /// True when the user liked nothing and the history shows plain ratings.
    pub history_flagged: bool,
    pub item_noun: String,
}

impl Instruction {
    pub fn candidate_titles(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.title.clone()).collect()
    }
}

/// Collapses any whitespace run, including newlines, to a single space.
pub fn sanitize_title(title: &str) -> String {
    title.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn fmt_rating(r: f64) -> String {
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r}")
    }
}

fn numbered<'a>(lines: impl Iterator<Item = String> + 'a) -> String {
    lines
        .enumerate()
        .map(|(k, l)| format!("{}. {l}", k + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_prompt(instruction: &Instruction) -> String {
    let history = numbered(instruction.history.iter().map(|h| {
        if instruction.history_flagged {
            format!("{} (rated {})", h.title, fmt_rating(h.rating))
        } else {
            h.title.clone()
        }
    }));
    let candidates = numbered(instruction.candidates.iter().map(|c| c.title.clone()));
    let noun = &instruction.item_noun;
    TEMPLATE
        .replace("{user_id}", &instruction.user_id)
        .replace("{verb}", if instruction.history_flagged { "rated" } else { "liked" })
        .replace("{items}", noun)
        .replace("{item}", noun.strip_suffix('s').unwrap_or(noun))
        .replace("{history}", &history)
        .replace("{candidates}", &candidates)
}

/// Per-user training histories, precomputed once for batch prompt building.
pub struct InstructionBuilder<'a> {
    split: &'a SplitDataset,
    train: Vec<Vec<Interaction>>,
    test: Vec<Vec<Interaction>>,
    liked_floor: f64,
}

impl<'a> InstructionBuilder<'a> {
    pub fn new(split: &'a SplitDataset) -> Self {
        InstructionBuilder {
            split,
            train: split.train.by_user(),
            test: split.test.by_user(),
            liked_floor: split.all.format().liked_floor(),
        }
    }

    pub fn test_items(&self, user: UserIdx) -> Vec<ItemIdx> {
        self.test.get(user.index()).map_or_else(Vec::new, |l| l.iter().map(|i| i.item).collect())
    }

    /// Prompt over the user's held-out test items.
    pub fn build(&self, user: UserIdx, history_cap: usize, seed: u64) -> Result<Instruction, InstructionError> {
        self.build_with_candidates(user, &self.test_items(user), history_cap, seed)
    }

    /// Samples up to `history_cap` liked training items, orders them by
    /// preference, and shuffles `candidates`. Both draws depend only on (seed, user).
    pub fn build_with_candidates(
        &self,
        user: UserIdx,
        candidates: &[ItemIdx],
        history_cap: usize,
        seed: u64,
    ) -> Result<Instruction, InstructionError> {
        let all = &self.split.all;
        let train = self.train.get(user.index()).ok_or(InstructionError::UnknownUser(user.0))?;
        let user_id = all.user_id(user).to_string();
        if candidates.is_empty() {
            return Err(InstructionError::NothingToRank(user_id));
        }
        if train.is_empty() {
            return Err(InstructionError::NoHistory(user_id));
        }

        let liked: Vec<&Interaction> = train.iter().filter(|i| i.rating >= self.liked_floor).collect();
        let history_flagged = liked.is_empty();
        let pool: Vec<&Interaction> = if history_flagged { train.iter().collect() } else { liked };
        if history_flagged {
            log::warn!("user {user_id} liked no training item; history shows raw ratings");
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2 * user.0 as u64);
        let mut sampled: Vec<&Interaction> = pool.choose_multiple(&mut rng, history_cap.min(pool.len())).copied().collect();
        sampled.sort_by(|a, b| {
            b.rating
                .total_cmp(&a.rating)
                .then(b.timestamp.cmp(&a.timestamp))
                .then(a.item.cmp(&b.item))
        });

        let history: Vec<HistoryEntry> = sampled
            .iter()
            .map(|i| HistoryEntry {
                item: i.item,
                title: sanitize_title(&all.title(i.item).text),
                rating: i.rating,
            })
            .collect();

        let mut order = candidates.to_vec();
        order.sort();
        let mut seen = HashSet::new();
        order.retain(|i| seen.insert(*i));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2 * user.0 as u64 + 1);
        order.shuffle(&mut rng);

        let titles: Vec<String> = order.iter().map(|&i| sanitize_title(&all.title(i).text)).collect();
        let mut counts = std::collections::HashMap::new();
        for t in titles.iter().chain(history.iter().map(|h| &h.title)) {
            *counts.entry(normalize_title(t)).or_insert(0usize) += 1;
        }
        let candidates = order
            .iter()
            .zip(titles)
            .map(|(&item, title)| {
                let title = if counts[&normalize_title(&title)] > 1 {
                    format!("{title} [item {}]", all.item_id(item))
                } else {
                    title
                };
                Candidate { item, title }
            })
            .collect();

        let mut instruction = Instruction {
            user,
            user_id,
            history,
            candidates,
            rendered_text: String::new(),
            shuffle_seed: seed,
            history_flagged,
            item_noun: all.format().item_noun().to_string(),
        };
        instruction.rendered_text = render_prompt(&instruction);
        Ok(instruction)
    }
}

/// One-off [`InstructionBuilder::build`].
pub fn build_instruction(
    split: &SplitDataset,
    user: UserIdx,
    history_cap: usize,
    seed: u64,
) -> Result<Instruction, InstructionError> {
    InstructionBuilder::new(split).build(user, history_cap, seed)
}
