use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::merge::CostBlock;
use crate::config::{CandidateSource, DatasetConfig, MergeMode, Seeds, SplitConfig, TsMode};
use crate::data::IngestSummary;
use crate::eval::{Thresholds, UserAssessment};
use crate::models::{HyperParams, ModelKind};
use crate::ranking::ListSource;

pub const REPORT_VERSION: u32 = 1;

/// What happened when a weak user's prompt went to the LLM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmOutcome {
    Parsed,
    ParseFailure,
    CallFailed,
    /// No candidates, or no training history to condition on.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserRow {
    pub user_id: String,
    pub n_train: usize,
    pub n_test: usize,
    pub sparsity_index: f64,
    pub inactive: bool,
    pub weak: bool,
    /// Sampled-pool AUC used to identify weak users; absent when undefined.
    pub auc_rs: Option<f64>,
    /// Candidate-set AUC of the conventional list.
    pub cand_auc_rs: f64,
    /// Candidate-set AUC of the LLM list (RS list after a failure); weak users only.
    pub auc_llm: Option<f64>,
    /// Candidate-set AUC of the list finally served.
    pub cand_auc_final: f64,
    pub ndcg10_rs: f64,
    pub ndcg10_final: f64,
    pub n_candidates: usize,
    pub n_relevant_candidates: usize,
    pub source: ListSource,
    pub llm_outcome: Option<LlmOutcome>,
}

/// Aggregates shown side by side for the base and hybrid lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableBlock {
    pub overall_auc: f64,
    pub auc_weak: Option<f64>,
    pub ndcg10: f64,
    pub ndcg10_weak: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    /// Mean sampled-pool AUC over users where it is defined.
    pub overall_auc: f64,
    pub n_auc_defined: usize,
    pub n_auc_undefined: usize,
    pub n_inactive: usize,
    pub validation_auc: f64,
    /// Inactive means a sparsity index strictly below `t_s`.
    pub density_rule: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LlmStats {
    pub queries: usize,
    pub parsed: usize,
    pub parse_failures: usize,
    pub call_failures: usize,
    pub skipped: usize,
    /// Response entries naming no candidate, summed over users.
    pub dropped_entries: usize,
    pub served: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub model_kind: ModelKind,
    pub grid: bool,
    pub hyperparameters: HyperParams,
    pub thresholds: Thresholds,
    pub t_s_mode: TsMode,
    pub llm: String,
    pub candidates: CandidateSource,
    pub history_cap: usize,
    pub merge_mode: MergeMode,
    pub seeds: Seeds,
    pub template_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridReport {
    pub version: u32,
    pub config: ConfigEcho,
    pub dataset: IngestSummary,
    pub identification: Identification,
    pub base: TableBlock,
    pub hybrid: TableBlock,
    pub weak_before: usize,
    pub weak_after: usize,
    /// `1 - weak_after / weak_before`, as a fraction.
    pub reduction_pct: f64,
    /// Weak users whose candidates hold no relevant item.
    pub weak_without_relevant_candidates: usize,
    pub llm_stats: LlmStats,
    pub cost: CostBlock,
    pub users: Vec<UserRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Base and hybrid aggregates recomputed from the rows.
pub fn table_blocks(rows: &[UserRow]) -> (TableBlock, TableBlock) {
    let weak = || rows.iter().filter(|r| r.weak);
    let base = TableBlock {
        overall_auc: mean(rows.iter().map(|r| r.cand_auc_rs)).unwrap_or(0.0),
        auc_weak: mean(weak().map(|r| r.cand_auc_rs)),
        ndcg10: mean(rows.iter().map(|r| r.ndcg10_rs)).unwrap_or(0.0),
        ndcg10_weak: mean(weak().map(|r| r.ndcg10_rs)),
    };
    let hybrid = TableBlock {
        overall_auc: mean(rows.iter().map(|r| r.cand_auc_final)).unwrap_or(0.0),
        auc_weak: mean(weak().map(|r| r.cand_auc_final)),
        ndcg10: mean(rows.iter().map(|r| r.ndcg10_final)).unwrap_or(0.0),
        ndcg10_weak: mean(weak().map(|r| r.ndcg10_final)),
    };
    (base, hybrid)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn write_file(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)
}

/// `user_id,n_train,n_test,sparsity_index,auc_rs,inactive,weak`; empty auc when undefined.
pub fn write_assessment_csv(path: &Path, assessments: &[UserAssessment]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["user_id", "n_train", "n_test", "sparsity_index", "auc_rs", "inactive", "weak"])?;
    for a in assessments {
        w.write_record([
            a.user_id.clone(),
            a.n_train.to_string(),
            a.n_test.to_string(),
            a.sparsity_index.to_string(),
            opt(a.auc),
            a.inactive.to_string(),
            a.weak.to_string(),
        ])?;
    }
    write_file(path, &w.into_inner().map_err(|e| e.into_error())?)
}

pub fn write_users_csv(path: &Path, rows: &[UserRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "user_id",
        "sparsity_index",
        "auc_rs",
        "cand_auc_rs",
        "auc_llm",
        "cand_auc_final",
        "ndcg10_rs",
        "ndcg10_final",
        "weak",
        "source",
    ])?;
    for r in rows {
        w.write_record([
            r.user_id.clone(),
            r.sparsity_index.to_string(),
            opt(r.auc_rs),
            r.cand_auc_rs.to_string(),
            opt(r.auc_llm),
            r.cand_auc_final.to_string(),
            r.ndcg10_rs.to_string(),
            r.ndcg10_final.to_string(),
            r.weak.to_string(),
            r.source.as_str().to_string(),
        ])?;
    }
    write_file(path, &w.into_inner().map_err(|e| e.into_error())?)
}

pub fn write_weak_counts_csv(path: &Path, report: &HybridReport) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "llm_kind", "weak_before", "weak_after", "reduction_pct"])?;
    w.write_record([
        report.config.model_kind.as_str().to_string(),
        report.config.llm.clone(),
        report.weak_before.to_string(),
        report.weak_after.to_string(),
        report.reduction_pct.to_string(),
    ])?;
    write_file(path, &w.into_inner().map_err(|e| e.into_error())?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(std::io::Error::other)?;
    bytes.write_all(b"\n")?;
    write_file(path, &bytes)
}

pub fn write_lines(path: &Path, lines: &[String]) -> std::io::Result<()> {
    let mut text = lines.join("\n");
    if !lines.is_empty() {
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| x.to_string())
}

impl HybridReport {
    /// Plain-text aggregate block; numbers print exactly as in the JSON.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "model {} | llm {} | merge {}\n",
            self.config.model_kind.as_str(),
            self.config.llm,
            match self.config.merge_mode {
                MergeMode::Evaluation => "evaluation",
                MergeMode::Deployment => "deployment",
            }
        ));
        out.push_str(&format!(
            "{:<8} {:<24} {:<24} {:<24} {:<24}\n",
            "", "AUC", "AUC (weak)", "NDCG@10", "NDCG@10 (weak)"
        ));
        for (name, b) in [("base", &self.base), ("hybrid", &self.hybrid)] {
            out.push_str(&format!(
                "{:<8} {:<24} {:<24} {:<24} {:<24}\n",
                name,
                b.overall_auc.to_string(),
                cell(b.auc_weak),
                b.ndcg10.to_string(),
                cell(b.ndcg10_weak)
            ));
        }
        out.push_str(&format!(
            "identification AUC {} over {} users\n",
            self.identification.overall_auc, self.identification.n_auc_defined
        ));
        out.push_str(&format!(
            "weak users {} -> {} (reduction {})\n",
            self.weak_before, self.weak_after, self.reduction_pct
        ));
        out.push_str(&format!(
            "LLM cost {} s for {} queries vs {} s for all users (savings {})\n",
            self.cost.total_seconds, self.cost.n_queries, self.cost.all_users_seconds, self.cost.savings_pct
        ));
        out
    }
}
