use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Instruction;
use crate::data::ItemIdx;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MockKind {
    /// Sorts candidates by their held-out rating.
    Oracle,
    /// Oracle order with each adjacent pair swapped with probability `p`.
    NoisyOracle { p: f64 },
    /// Returns the candidates as given.
    Echo,
    /// Echo plus `count` titles that are not candidates.
    Hallucinating { count: usize },
}

impl MockKind {
    pub fn label(&self) -> String {
        match self {
            MockKind::Oracle => "mock-oracle".into(),
            MockKind::NoisyOracle { p } => format!("mock-noisy-oracle-{p}"),
            MockKind::Echo => "mock-echo".into(),
            MockKind::Hallucinating { count } => format!("mock-hallucinating-{count}"),
        }
    }
}

/// Deterministic stand-in for a language model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MockLlm {
    pub kind: MockKind,
    pub seed: u64,
}

fn numbered(titles: &[String]) -> String {
    let mut out = String::new();
    for (k, t) in titles.iter().enumerate() {
        out.push_str(&format!("{}. {t}\n", k + 1));
    }
    out
}

fn oracle_order(instruction: &Instruction, truth: &HashMap<ItemIdx, f64>) -> Vec<usize> {
    let rating = |k: usize| truth.get(&instruction.candidates[k].item).copied().unwrap_or(f64::NEG_INFINITY);
    let mut order: Vec<usize> = (0..instruction.candidates.len()).collect();
    order.sort_by(|&a, &b| {
        rating(b)
            .total_cmp(&rating(a))
            .then(instruction.candidates[a].item.cmp(&instruction.candidates[b].item))
    });
    order
}

/// The mock's reply to `instruction`. Candidates missing from `truth` sort last
/// under the oracle kinds.
pub fn mock_complete(mock: &MockLlm, instruction: &Instruction, truth: &HashMap<ItemIdx, f64>) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(mock.seed);
    rng.set_stream(instruction.user.0 as u64);
    let title = |k: usize| instruction.candidates[k].title.clone();
    let echo: Vec<usize> = (0..instruction.candidates.len()).collect();
    let titles: Vec<String> = match &mock.kind {
        MockKind::Oracle => oracle_order(instruction, truth).into_iter().map(title).collect(),
        MockKind::NoisyOracle { p } => {
            let mut order = oracle_order(instruction, truth);
            for k in 0..order.len().saturating_sub(1) {
                if rng.random::<f64>() < *p {
                    order.swap(k, k + 1);
                }
            }
            order.into_iter().map(title).collect()
        }
        MockKind::Echo => echo.into_iter().map(title).collect(),
        MockKind::Hallucinating { count } => {
            let mut out: Vec<String> = echo.into_iter().map(title).collect();
            for n in 0..*count {
                let at = rng.random_range(0..=out.len());
                out.insert(at, format!("Imaginary Feature {} (2031)", n + 1));
            }
            out
        }
    };
    numbered(&titles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UserIdx;
    use crate::llm::Candidate;

    fn instruction(titles: &[&str]) -> Instruction {
        Instruction {
            user: UserIdx(0),
            user_id: "1".into(),
            history: Vec::new(),
            candidates: titles
                .iter()
                .enumerate()
                .map(|(k, t)| Candidate {
                    item: ItemIdx(k as u32),
                    title: t.to_string(),
                })
                .collect(),
            rendered_text: String::new(),
            shuffle_seed: 0,
            history_flagged: false,
            item_noun: "movies".into(),
        }
    }

    fn truth() -> HashMap<ItemIdx, f64> {
        [(ItemIdx(0), 5.0), (ItemIdx(1), 2.0), (ItemIdx(2), 4.0)].into_iter().collect()
    }

    #[test]
    fn oracle_sorts_by_truth() {
        let m = MockLlm {
            kind: MockKind::Oracle,
            seed: 0,
        };
        assert_eq!(mock_complete(&m, &instruction(&["a", "b", "c"]), &truth()), "1. a\n2. c\n3. b\n");
    }

    #[test]
    fn noiseless_noisy_oracle_is_oracle() {
        let ins = instruction(&["a", "b", "c"]);
        let oracle = mock_complete(&MockLlm { kind: MockKind::Oracle, seed: 4 }, &ins, &truth());
        let noisy = mock_complete(&MockLlm { kind: MockKind::NoisyOracle { p: 0.0 }, seed: 4 }, &ins, &truth());
        assert_eq!(oracle, noisy);
    }

    #[test]
    fn echo_is_identity() {
        let m = MockLlm { kind: MockKind::Echo, seed: 0 };
        assert_eq!(mock_complete(&m, &instruction(&["x", "y"]), &HashMap::new()), "1. x\n2. y\n");
    }

    #[test]
    fn hallucinating_injects_titles() {
        let m = MockLlm { kind: MockKind::Hallucinating { count: 2 }, seed: 1 };
        let out = mock_complete(&m, &instruction(&["x", "y"]), &HashMap::new());
        assert_eq!(out.lines().count(), 4);
        assert_eq!(out.matches("Imaginary Feature").count(), 2);
    }
}
