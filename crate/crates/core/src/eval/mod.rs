//! TREC-style evaluation: metrics, significance testing, cross-validated
//! tuning and term-level (intrinsic) judgments.

mod intrinsic;
mod metrics;
mod stats;
mod trec;
mod tuning;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::index::Ranking;
use crate::{Result, Warnings};

pub use intrinsic::{
    intrinsic_labels, intrinsic_precision, pool_candidates, IntrinsicPrecision, Label, TermLabel,
    INTRINSIC_LAMBDA, INTRINSIC_THRESHOLD,
};
pub use metrics::{average_precision, ndcg, precision_at, recall_at, Metric};
pub use stats::{paired_t_test, Degenerate, TTest};
pub use trec::{
    parse_folds, parse_qrels, parse_run, parse_topics, relevant_count, write_folds, write_qrels,
    write_run, Qrels, Run, Topic,
};
pub use tuning::{
    feedback_grid, grid_search_cv, standard_grid, CvResult, FeedbackPoint, FoldSelection, Folds,
    PointScores,
};

/// Per-query and mean metric values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Vec<Metric>,
    /// Evaluated queries; values in the order of `metrics`.
    pub per_query: BTreeMap<String, Vec<f64>>,
    pub means: Vec<f64>,
    /// Queries left out because they have no relevant document.
    pub excluded: Vec<String>,
}

impl EvalReport {
    pub fn from_per_query(
        metrics: Vec<Metric>,
        per_query: BTreeMap<String, Vec<f64>>,
        excluded: Vec<String>,
    ) -> Self {
        let means = (0..metrics.len())
            .map(|m| {
                if per_query.is_empty() {
                    0.0
                } else {
                    per_query.values().map(|v| v[m]).sum::<f64>() / per_query.len() as f64
                }
            })
            .collect();
        Self {
            metrics,
            per_query,
            means,
            excluded,
        }
    }

    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.metrics
            .iter()
            .position(|&m| m == metric)
            .map(|i| self.means[i])
    }

    /// Per-query values of one metric, in query-id order.
    pub fn column(&self, metric: Metric) -> Option<Vec<f64>> {
        let i = self.metrics.iter().position(|&m| m == metric)?;
        Some(self.per_query.values().map(|v| v[i]).collect())
    }

    /// `metric<TAB>query<TAB>value` lines; means use the query id `all`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (qid, values) in &self.per_query {
            for (m, v) in self.metrics.iter().zip(values) {
                let _ = writeln!(out, "{m}\t{qid}\t{v:.4}");
            }
        }
        for (m, v) in self.metrics.iter().zip(&self.means) {
            let _ = writeln!(out, "{m}\tall\t{v:.4}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores `rankings` against `qrels`. Queries without a relevant document
/// are excluded; judged queries missing from the rankings score 0.
pub fn evaluate<'a>(
    rankings: impl IntoIterator<Item = &'a Ranking>,
    qrels: &Qrels,
    metrics: &[Metric],
) -> Result<(EvalReport, Warnings)> {
    let by_query: BTreeMap<&str, &Ranking> = rankings
        .into_iter()
        .map(|r| (r.query_id.as_str(), r))
        .collect();
    let mut warnings = Warnings::new();

    let orphans: Vec<&str> = by_query
        .keys()
        .copied()
        .filter(|q| !qrels.contains_key(*q))
        .collect();
    if !orphans.is_empty() {
        warnings.push(format!(
            "queries in the run without judgments (ignored): {}",
            orphans.join(", ")
        ));
    }
    let missing: BTreeSet<&str> = qrels
        .iter()
        .filter(|(q, j)| relevant_count(j) > 0 && !by_query.contains_key(q.as_str()))
        .map(|(q, _)| q.as_str())
        .collect();
    if !missing.is_empty() {
        warnings.push(format!(
            "judged queries missing from the run (scored 0): {}",
            missing.iter().copied().collect::<Vec<_>>().join(", ")
        ));
    }

    let mut per_query = BTreeMap::new();
    let mut excluded = Vec::new();
    for (qid, judgments) in qrels {
        if relevant_count(judgments) == 0 {
            excluded.push(qid.clone());
            continue;
        }
        let ids: Vec<&str> = by_query
            .get(qid.as_str())
            .map(|r| r.doc_ids().collect())
            .unwrap_or_default();
        let values = metrics
            .iter()
            .map(|m| m.compute(&ids, judgments).unwrap_or(0.0))
            .collect();
        per_query.insert(qid.clone(), values);
    }
    if !excluded.is_empty() {
        warnings.push(format!(
            "queries without relevant documents (excluded): {}",
            excluded.join(", ")
        ));
    }
    Ok((
        EvalReport::from_per_query(metrics.to_vec(), per_query, excluded),
        warnings,
    ))
}
