//! The hybrid run end to end: ingest, split, train, assess, classify, prompt
//! the LLM for weak users, merge, and report. Every stage persists its
//! outputs under the configured output directory.

mod merge;
mod report;
mod train;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use merge::{cost_report, merge_rankings, reduction_fraction, weak_count_after, CostBlock, MismatchedCandidates};
pub use report::{
    table_blocks, ConfigEcho, HybridReport, Identification, LlmOutcome, LlmStats, TableBlock, UserRow, REPORT_VERSION,
};
pub use train::{fit_model, grid, validation_auc, GridTrial, TrainOutcome};

use crate::config::{CandidateSource, DatasetConfig, LlmMode, RunConfig};
use crate::data::{
    filter_min_interactions, parse_item_catalog, parse_ratings, split_per_user, Dataset, IngestSummary, ItemIdx,
    SplitDataset, UserIdx,
};
use crate::eval::{
    assess_users, candidate_set_auc, classify_users, mean_defined_auc, mean_sparsity_threshold, ndcg_at_k, Holdout,
    PoolBuilder, Thresholds, UserAssessment,
};
use crate::llm::{
    complete_batch, mock_complete, parse_ranked_response, Instruction, InstructionBuilder, LlmClient, MockLlm,
    TEMPLATE_VERSION,
};
use crate::models::{TrainedRanker, ARTIFACT_VERSION};
use crate::ranking::{ListSource, RankedList};

pub const ASSESSMENT_CSV: &str = "assessment.csv";
pub const WEAK_USERS_TXT: &str = "weak_users.txt";
pub const INGEST_SUMMARY_JSON: &str = "ingest_summary.json";
pub const REPORT_JSON: &str = "report.json";
pub const USERS_CSV: &str = "users.csv";
pub const WEAK_COUNTS_CSV: &str = "weak_counts.csv";
pub const PROMPTS_DIR: &str = "prompts";
pub const RESPONSES_DIR: &str = "responses";

const NDCG_K: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Split,
    Train,
    Assess,
    Prompts,
    Llm,
    Merge,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::Assess => "assess",
            Stage::Prompts => "prompts",
            Stage::Llm => "llm",
            Stage::Merge => "merge",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl Into<String>) -> Self {
        PipelineError {
            stage,
            message: message.into(),
        }
    }
}

fn at<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::new(stage, e.to_string())
}

/// The split dataset plus what later stages need to know about its source.
pub struct Prepared {
    pub split: SplitDataset,
    /// Hex sha256 of the ratings file bytes.
    pub ratings_digest: String,
    pub summary: IngestSummary,
    /// Mean sparsity index over all users.
    pub auto_t_s: f64,
}

/// Parses the ratings and item files and applies the interaction filter.
/// A missing item file is tolerated: titles fall back to item ids.
pub fn ingest(cfg: &DatasetConfig) -> Result<(Dataset, String), PipelineError> {
    let ratings = cfg.ratings_path();
    let bytes = std::fs::read(&ratings)
        .map_err(|e| PipelineError::new(Stage::Ingest, format!("cannot read {}: {e}", ratings.display())))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let mut dataset = parse_ratings(&bytes[..], cfg.format)
        .map_err(|e| PipelineError::new(Stage::Ingest, format!("{}: {e}", ratings.display())))?;

    let items = cfg.items_path();
    match File::open(&items) {
        Ok(f) => {
            let catalog = parse_item_catalog(f, cfg.format)
                .map_err(|e| PipelineError::new(Stage::Ingest, format!("{}: {e}", items.display())))?;
            dataset = dataset.with_catalog(catalog);
        }
        Err(e) => log::warn!("no item titles ({}: {e}); prompts will use item ids", items.display()),
    }
    if cfg.min_interactions > 1 {
        dataset = filter_min_interactions(&dataset, cfg.min_interactions).map_err(at(Stage::Ingest))?;
    }
    Ok((dataset, digest))
}

pub fn prepare(config: &RunConfig) -> Result<Prepared, PipelineError> {
    let (dataset, ratings_digest) = ingest(&config.dataset)?;
    let summary = dataset.ingest_summary();
    log::info!(
        "ingested {} users, {} items, {} interactions",
        summary.users,
        summary.items,
        summary.interactions
    );
    let split = split_per_user(&dataset, config.split_ratios(), config.split.seed).map_err(at(Stage::Split))?;
    let auto_t_s = mean_sparsity_threshold(&split.all);
    Ok(Prepared {
        split,
        ratings_digest,
        summary,
        auto_t_s,
    })
}

pub fn resolve_thresholds(config: &RunConfig, prepared: &Prepared) -> Thresholds {
    config.thresholds.resolve(config.dataset.format, prepared.auto_t_s)
}

#[derive(Serialize, Deserialize)]
struct CacheMeta {
    validation_auc: f64,
    trials: Vec<GridTrial>,
}

/// Content address of a trained model: everything that can change its weights
/// or its early-stopping path, and nothing else.
pub fn model_cache_key(config: &RunConfig, prepared: &Prepared, thresholds: &Thresholds) -> String {
    let canonical = serde_json::json!({
        "artifact_version": ARTIFACT_VERSION,
        "ratings_sha256": prepared.ratings_digest,
        "format": config.dataset.format,
        "min_interactions": config.dataset.min_interactions,
        "split": config.split,
        "model": config.model,
        "relevance_cutoff": thresholds.relevance_cutoff,
        "n_sampled_negatives": thresholds.n_sampled_negatives,
        "seed_train": config.seeds.train,
        "seed_negatives": config.seeds.negatives,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

fn cache_paths(config: &RunConfig, key: &str) -> (PathBuf, PathBuf) {
    let dir = config.output_dir.join("cache");
    (dir.join(format!("model-{key}.json")), dir.join(format!("model-{key}.meta.json")))
}

fn load_cached(model_path: &Path, meta_path: &Path) -> Option<TrainOutcome> {
    if !model_path.exists() || !meta_path.exists() {
        return None;
    }
    let loaded = TrainedRanker::load(model_path).map_err(|e| e.to_string()).and_then(|model| {
        let bytes = std::fs::read(meta_path).map_err(|e| e.to_string())?;
        let meta: CacheMeta = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
        Ok(TrainOutcome {
            model,
            validation_auc: meta.validation_auc,
            trials: meta.trials,
        })
    });
    match loaded {
        Ok(outcome) => Some(outcome),
        Err(e) => {
            log::warn!("ignoring unreadable model cache {}: {e}", model_path.display());
            None
        }
    }
}

/// Trains the configured model, or loads it from the cache when an identical
/// training setup already ran.
pub fn train_stage(config: &RunConfig, prepared: &Prepared, thresholds: &Thresholds) -> Result<TrainOutcome, PipelineError> {
    let key = model_cache_key(config, prepared, thresholds);
    let (model_path, meta_path) = cache_paths(config, &key);
    if let Some(outcome) = load_cached(&model_path, &meta_path) {
        log::info!("cache hit: loaded {} model from {}", config.model.kind.as_str(), model_path.display());
        return Ok(outcome);
    }
    log::info!("cache miss: training {} model", config.model.kind.as_str());
    let outcome = fit_model(
        config.model.kind,
        &prepared.split,
        thresholds,
        &config.model.hyperparameters,
        config.model.grid,
        config.seeds.train,
        config.seeds.negatives,
    )
    .map_err(at(Stage::Train))?;
    std::fs::create_dir_all(model_path.parent().expect("cache dir")).map_err(at(Stage::Train))?;
    outcome.model.save(&model_path).map_err(at(Stage::Train))?;
    let meta = CacheMeta {
        validation_auc: outcome.validation_auc,
        trials: outcome.trials.clone(),
    };
    report::write_json(&meta_path, &meta).map_err(at(Stage::Train))?;
    Ok(outcome)
}

/// Outputs of the identification phase.
pub struct Assessed {
    pub prepared: Prepared,
    pub thresholds: Thresholds,
    pub outcome: TrainOutcome,
    /// One entry per user, ascending user index.
    pub assessments: Vec<UserAssessment>,
    pub weak: Vec<UserIdx>,
}

/// Trains (or loads) the model, scores every user on the test pools and
/// classifies them. Writes the ingest summary, assessment table and weak-user list.
pub fn run_assess(config: &RunConfig) -> Result<Assessed, PipelineError> {
    let prepared = prepare(config)?;
    let thresholds = resolve_thresholds(config, &prepared);
    let outcome = train_stage(config, &prepared, &thresholds)?;
    let pools = PoolBuilder::new(&prepared.split);
    let model = &outcome.model;
    let assessments = assess_users(&pools, Holdout::Test, &thresholds, config.seeds.negatives, |u, i| {
        model.score(u, i).expect("pool items are in range")
    });
    let (weak, _) = classify_users(&assessments, &thresholds);
    log::info!("{} of {} users are weak (t_s = {})", weak.len(), assessments.len(), thresholds.t_s);

    let out = &config.output_dir;
    let assess_err = at(Stage::Assess);
    report::write_json(&out.join(INGEST_SUMMARY_JSON), &prepared.summary).map_err(&assess_err)?;
    report::write_assessment_csv(&out.join(ASSESSMENT_CSV), &assessments).map_err(&assess_err)?;
    let ids: Vec<String> = weak.iter().map(|&u| prepared.split.all.user_id(u).to_string()).collect();
    report::write_lines(&out.join(WEAK_USERS_TXT), &ids).map_err(&assess_err)?;
    Ok(Assessed {
        prepared,
        thresholds,
        outcome,
        assessments,
        weak,
    })
}

/// Items each user's lists rank, and the conventional model's order over them.
struct Candidates<'a> {
    split: &'a SplitDataset,
    model: Option<&'a TrainedRanker>,
    source: CandidateSource,
    train: Vec<Vec<ItemIdx>>,
}

impl<'a> Candidates<'a> {
    fn new(split: &'a SplitDataset, model: Option<&'a TrainedRanker>, source: CandidateSource) -> Self {
        let train = split
            .train
            .by_user()
            .into_iter()
            .map(|l| {
                let mut items: Vec<ItemIdx> = l.into_iter().map(|i| i.item).collect();
                items.sort();
                items
            })
            .collect();
        Candidates {
            split,
            model,
            source,
            train,
        }
    }

    fn items(&self, builder: &InstructionBuilder, user: UserIdx) -> Vec<ItemIdx> {
        match self.source {
            CandidateSource::TestItems => builder.test_items(user),
            CandidateSource::RsTopN(n) => {
                let model = self.model.expect("top-n candidates need a model");
                let seen = &self.train[user.index()];
                let unseen: Vec<ItemIdx> = (0..self.split.all.n_items() as u32)
                    .map(ItemIdx)
                    .filter(|i| seen.binary_search(i).is_err())
                    .collect();
                if unseen.is_empty() {
                    return unseen;
                }
                let mut ranked = model.rank_candidates(user, &unseen).expect("items in range").items;
                ranked.truncate(n);
                ranked
            }
        }
    }
}

fn reset_dir(dir: &Path) -> std::io::Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    std::fs::create_dir_all(dir)
}

fn user_file(dir: &Path, user_id: &str) -> PathBuf {
    dir.join(format!("user_{user_id}.txt"))
}

/// Writes one prompt file per weak user from a previous assessment and
/// returns how many were written. Users with nothing to rank get no file.
pub fn run_prompts(config: &RunConfig) -> Result<usize, PipelineError> {
    let weak_path = config.output_dir.join(WEAK_USERS_TXT);
    let text = std::fs::read_to_string(&weak_path).map_err(|_| {
        PipelineError::new(
            Stage::Prompts,
            format!("no assessment found at {}; run assess first", weak_path.display()),
        )
    })?;
    let prepared = prepare(config)?;
    let split = &prepared.split;
    let mut weak = Vec::new();
    for id in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let user = split.all.lookup_user(id).ok_or_else(|| {
            PipelineError::new(Stage::Prompts, format!("weak user {id} is not in the dataset; rerun assess"))
        })?;
        weak.push(user);
    }

    let outcome = match config.llm.candidates {
        CandidateSource::TestItems => None,
        CandidateSource::RsTopN(_) => Some(train_stage(config, &prepared, &resolve_thresholds(config, &prepared))?),
    };
    let candidates = Candidates::new(split, outcome.as_ref().map(|o| &o.model), config.llm.candidates);
    let builder = InstructionBuilder::new(split);
    let dir = config.output_dir.join(PROMPTS_DIR);
    reset_dir(&dir).map_err(at(Stage::Prompts))?;
    let mut written = 0;
    for user in weak {
        match builder.build_with_candidates(
            user,
            &candidates.items(&builder, user),
            config.llm.history_cap,
            config.seeds.shuffle,
        ) {
            Ok(ins) => {
                std::fs::write(user_file(&dir, &ins.user_id), &ins.rendered_text).map_err(at(Stage::Prompts))?;
                written += 1;
            }
            Err(e) => log::warn!("no prompt: {e}"),
        }
    }
    Ok(written)
}

enum Reply {
    Text(String),
    Failed(String),
}

/// Gets one completion per instruction, in instruction order.
fn query_llm(config: &RunConfig, split: &SplitDataset, jobs: &[Instruction]) -> Result<Vec<Reply>, PipelineError> {
    match config.llm.mode {
        LlmMode::Mock => {
            let mock = MockLlm {
                kind: config.llm.mock.clone().expect("validated"),
                seed: config.seeds.shuffle,
            };
            let test = split.test.by_user();
            Ok(jobs
                .iter()
                .map(|ins| {
                    let truth: HashMap<ItemIdx, f64> = test[ins.user.index()].iter().map(|i| (i.item, i.rating)).collect();
                    Reply::Text(mock_complete(&mock, ins, &truth))
                })
                .collect())
        }
        LlmMode::Endpoint => {
            let endpoint = config.llm.endpoint.clone().expect("validated");
            let width = endpoint.max_concurrency;
            let client = LlmClient::from_env(endpoint).map_err(at(Stage::Llm))?;
            Ok(complete_batch(jobs, width, |ins| match client.complete(&ins.rendered_text) {
                Ok(c) => Reply::Text(c.text),
                Err(e) => Reply::Failed(e.to_string()),
            }))
        }
    }
}

/// Result of the LLM round trip for one weak user.
struct LlmResult {
    list: RankedList,
    outcome: LlmOutcome,
}

/// Runs the whole hybrid algorithm and writes every report artifact.
pub fn run_hybrid(config: &RunConfig) -> Result<HybridReport, PipelineError> {
    let assessed = run_assess(config)?;
    let split = &assessed.prepared.split;
    let th = &assessed.thresholds;
    let model = &assessed.outcome.model;
    let out = &config.output_dir;

    let candidates = Candidates::new(split, Some(model), config.llm.candidates);
    let builder = InstructionBuilder::new(split);
    let test = split.test.by_user();
    let n_users = split.all.n_users();

    let mut rs_lists = Vec::with_capacity(n_users);
    for u in (0..n_users as u32).map(UserIdx) {
        let items = candidates.items(&builder, u);
        let list = if items.is_empty() {
            RankedList::new(u, items, ListSource::Rs)
        } else {
            model.rank_candidates(u, &items).map_err(at(Stage::Merge))?
        };
        rs_lists.push(list);
    }
    let relevant: Vec<HashSet<ItemIdx>> = test
        .iter()
        .map(|l| l.iter().filter(|i| i.rating >= th.relevance_cutoff).map(|i| i.item).collect())
        .collect();

    // Prompts for weak users; users with nothing to rank keep their RS list.
    let prompts_dir = out.join(PROMPTS_DIR);
    let responses_dir = out.join(RESPONSES_DIR);
    reset_dir(&prompts_dir).map_err(at(Stage::Prompts))?;
    reset_dir(&responses_dir).map_err(at(Stage::Llm))?;
    let mut results: BTreeMap<UserIdx, LlmResult> = BTreeMap::new();
    let mut jobs = Vec::new();
    for &u in &assessed.weak {
        let rs = &rs_lists[u.index()];
        match builder.build_with_candidates(u, &rs.items, config.llm.history_cap, config.seeds.shuffle) {
            Ok(ins) => {
                std::fs::write(user_file(&prompts_dir, &ins.user_id), &ins.rendered_text)
                    .map_err(at(Stage::Prompts))?;
                jobs.push(ins);
            }
            Err(e) => {
                log::warn!("skipping LLM for weak user: {e}");
                results.insert(
                    u,
                    LlmResult {
                        list: merge::with_source(rs, ListSource::RsFallback),
                        outcome: LlmOutcome::Skipped,
                    },
                );
            }
        }
    }

    let replies = query_llm(config, split, &jobs)?;
    let mut dropped_entries = 0;
    for (ins, reply) in jobs.iter().zip(replies) {
        let rs = &rs_lists[ins.user.index()];
        let fallback = merge::with_source(rs, ListSource::RsFallback);
        let result = match reply {
            Reply::Failed(message) => {
                log::warn!("LLM call for user {} failed: {message}", ins.user_id);
                LlmResult {
                    list: fallback,
                    outcome: LlmOutcome::CallFailed,
                }
            }
            Reply::Text(text) => {
                std::fs::write(user_file(&responses_dir, &ins.user_id), &text).map_err(at(Stage::Llm))?;
                let titles = ins.candidate_titles();
                let title_of: HashMap<ItemIdx, &String> = ins.candidates.iter().map(|c| c.item).zip(&titles).collect();
                let rs_order: Vec<String> = rs.items.iter().map(|i| title_of[i].clone()).collect();
                match parse_ranked_response(&text, &titles, &rs_order) {
                    Ok(parsed) => {
                        dropped_entries += parsed.dropped.len();
                        let items = parsed.order.iter().map(|&k| ins.candidates[k].item).collect();
                        LlmResult {
                            list: RankedList::new(ins.user, items, ListSource::Llm),
                            outcome: LlmOutcome::Parsed,
                        }
                    }
                    Err(_) => {
                        log::warn!("response for user {} names no candidate", ins.user_id);
                        LlmResult {
                            list: fallback,
                            outcome: LlmOutcome::ParseFailure,
                        }
                    }
                }
            }
        };
        results.insert(ins.user, result);
    }

    let weak_set: HashSet<UserIdx> = assessed.weak.iter().copied().collect();
    let mut auc_llm = BTreeMap::new();
    let mut rows = Vec::with_capacity(n_users);
    let mut stats = LlmStats {
        queries: assessed.weak.len(),
        dropped_entries,
        ..LlmStats::default()
    };
    for a in &assessed.assessments {
        let u = a.user;
        let rs = &rs_lists[u.index()];
        let rel = &relevant[u.index()];
        let auc_of = |l: &RankedList| candidate_set_auc(&l.items, |i| rel.contains(i));
        let gains: HashMap<ItemIdx, f64> = rel.iter().map(|&i| (i, 1.0)).collect();
        let ndcg_of = |l: &RankedList| ndcg_at_k(&l.items, &gains, NDCG_K);

        let (final_list, llm_auc, outcome) = match results.get(&u) {
            Some(r) => {
                let served = match r.outcome {
                    LlmOutcome::Parsed => merge_rankings(rs, &r.list, rel, config.merge_mode).map_err(at(Stage::Merge))?,
                    _ => r.list.clone(),
                };
                let auc = auc_of(&r.list);
                auc_llm.insert(u, auc);
                (served, Some(auc), Some(r.outcome))
            }
            None => (rs.clone(), None, None),
        };
        match outcome {
            Some(LlmOutcome::Parsed) => stats.parsed += 1,
            Some(LlmOutcome::ParseFailure) => stats.parse_failures += 1,
            Some(LlmOutcome::CallFailed) => stats.call_failures += 1,
            Some(LlmOutcome::Skipped) => stats.skipped += 1,
            None => {}
        }
        *stats.served.entry(final_list.source.as_str().to_string()).or_default() += 1;
        debug_assert_eq!(a.weak, weak_set.contains(&u));
        rows.push(UserRow {
            user_id: a.user_id.clone(),
            n_train: a.n_train,
            n_test: a.n_test,
            sparsity_index: a.sparsity_index,
            inactive: a.inactive,
            weak: a.weak,
            auc_rs: a.auc,
            cand_auc_rs: auc_of(rs),
            auc_llm: llm_auc,
            cand_auc_final: auc_of(&final_list),
            ndcg10_rs: ndcg_of(rs),
            ndcg10_final: ndcg_of(&final_list),
            n_candidates: rs.items.len(),
            n_relevant_candidates: rs.items.iter().filter(|i| rel.contains(i)).count(),
            source: final_list.source,
            llm_outcome: outcome,
        });
    }

    let weak_before = assessed.weak.len();
    let weak_after = weak_count_after(&assessed.weak, &auc_llm, th.t_p);
    let (base, hybrid) = table_blocks(&rows);
    let (overall_auc, n_defined) = mean_defined_auc(&assessed.assessments);
    let report = HybridReport {
        version: REPORT_VERSION,
        config: ConfigEcho {
            dataset: config.dataset.clone(),
            split: config.split.clone(),
            model_kind: config.model.kind,
            grid: config.model.grid,
            hyperparameters: model.hyperparameters.clone(),
            thresholds: th.clone(),
            t_s_mode: config.thresholds.t_s_mode,
            llm: config.llm.label(),
            candidates: config.llm.candidates,
            history_cap: config.llm.history_cap,
            merge_mode: config.merge_mode,
            seeds: config.seeds.clone(),
            template_version: TEMPLATE_VERSION.to_string(),
        },
        dataset: assessed.prepared.summary.clone(),
        identification: Identification {
            overall_auc,
            n_auc_defined: n_defined,
            n_auc_undefined: assessed.assessments.len() - n_defined,
            n_inactive: assessed.assessments.iter().filter(|a| a.inactive).count(),
            validation_auc: assessed.outcome.validation_auc,
            density_rule: "sparsity_index < t_s".to_string(),
        },
        base,
        hybrid,
        weak_before,
        weak_after,
        reduction_pct: reduction_fraction(weak_before, weak_after),
        weak_without_relevant_candidates: rows.iter().filter(|r| r.weak && r.n_relevant_candidates == 0).count(),
        llm_stats: stats,
        cost: cost_report(weak_before, n_users, config.llm.per_query_seconds()),
        users: rows,
    };

    let report_err = at(Stage::Report);
    report::write_json(&out.join(REPORT_JSON), &report).map_err(&report_err)?;
    report::write_users_csv(&out.join(USERS_CSV), &report.users).map_err(&report_err)?;
    report::write_weak_counts_csv(&out.join(WEAK_COUNTS_CSV), &report).map_err(&report_err)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_in_errors() {
        let e = PipelineError::new(Stage::Ingest, "missing u.data");
        assert_eq!(e.to_string(), "ingest stage failed: missing u.data");
    }

    #[test]
    fn reset_dir_clears_old_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("prompts");
        std::fs::create_dir_all(&p).unwrap();
        std::fs::write(p.join("user_1.txt"), "x").unwrap();
        reset_dir(&p).unwrap();
        assert_eq!(std::fs::read_dir(&p).unwrap().count(), 0);
    }
}
