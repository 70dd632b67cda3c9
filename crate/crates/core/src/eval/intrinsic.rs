//! Judging individual expansion terms by the recall change they cause when
//! added alone to the query.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::metrics::recall_at;
use super::trec::relevant_count;
use crate::expansion::{execute_expanded, interpolate, TermDistribution};
use crate::index::Index;
use crate::text::Token;
use crate::{Error, Result, Warnings};

/// Recall changes within ± this value are neutral.
pub const INTRINSIC_THRESHOLD: f64 = 0.001;
/// Weight of the added term.
pub const INTRINSIC_LAMBDA: f64 = 0.5;
const DEPTH: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
    Neutral,
}

impl Label {
    pub fn from_delta(delta: f64) -> Self {
        if delta > INTRINSIC_THRESHOLD {
            Label::Positive
        } else if delta < -INTRINSIC_THRESHOLD {
            Label::Negative
        } else {
            Label::Neutral
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
            Label::Neutral => "neutral",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermLabel {
    pub query_id: String,
    pub stem: String,
    pub delta_recall1000: f64,
    pub label: Label,
}

fn recall_of(
    index: &Index,
    model: &TermDistribution,
    judgments: &BTreeMap<String, u32>,
    mu: f64,
) -> Result<f64> {
    let ranking = execute_expanded(index, model, mu, DEPTH)?;
    let ids: Vec<&str> = ranking.doc_ids().collect();
    Ok(recall_at(&ids, judgments, DEPTH).unwrap_or(0.0))
}

/// Labels each stem by Recall@1000 of the query with the stem mixed in at
/// weight 0.5, minus Recall@1000 of the query alone. Returns an empty list
/// when the query has no relevant document.
pub fn intrinsic_labels(
    index: &Index,
    query_id: &str,
    query: &[Token],
    stems: &[&str],
    judgments: &BTreeMap<String, u32>,
    mu: f64,
) -> Result<Vec<TermLabel>> {
    if relevant_count(judgments) == 0 {
        return Ok(Vec::new());
    }
    let original = TermDistribution::query_mle(query_id, query)?;
    let base = recall_of(index, &original, judgments, mu)?;
    let mut out = Vec::with_capacity(stems.len());
    for &stem in stems {
        if index.term_id(stem).is_none() {
            return Err(Error::InvalidArgument(format!(
                "{stem:?} is not in the index vocabulary"
            )));
        }
        let point = TermDistribution {
            query_id: query_id.to_string(),
            weights: [(stem.to_string(), 1.0)].into_iter().collect(),
        };
        let model = interpolate(query, &point, INTRINSIC_LAMBDA)?;
        let delta = recall_of(index, &model, judgments, mu)? - base;
        out.push(TermLabel {
            query_id: query_id.to_string(),
            stem: stem.to_string(),
            delta_recall1000: delta,
            label: Label::from_delta(delta),
        });
    }
    Ok(out)
}

/// Union of the first `depth` terms of each method's ranking.
pub fn pool_candidates<'a>(
    rankings: impl IntoIterator<Item = &'a [String]>,
    depth: usize,
) -> Vec<String> {
    let pooled: BTreeSet<&String> = rankings
        .into_iter()
        .flat_map(|r| r.iter().take(depth))
        .collect();
    pooled.into_iter().cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicPrecision {
    pub k: usize,
    pub mean: f64,
    pub per_query: BTreeMap<String, f64>,
    /// Queries without any positive term.
    pub excluded: Vec<String>,
}

/// Fraction of each query's top-`k` terms labeled positive, averaged over
/// queries that have at least one positive term. Terms without a label
/// count as not positive.
pub fn intrinsic_precision(
    rankings: &BTreeMap<String, Vec<String>>,
    labels: &BTreeMap<String, BTreeMap<String, Label>>,
    k: usize,
) -> Result<(IntrinsicPrecision, Warnings)> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut warnings = Warnings::new();
    let mut per_query = BTreeMap::new();
    let mut excluded = Vec::new();
    for (qid, judged) in labels {
        if !judged.values().any(|&l| l == Label::Positive) {
            excluded.push(qid.clone());
            continue;
        }
        let Some(ranked) = rankings.get(qid) else {
            warnings.push(format!("query {qid:?}: no term ranking; scored 0"));
            per_query.insert(qid.clone(), 0.0);
            continue;
        };
        let top = &ranked[..k.min(ranked.len())];
        let unjudged = top.iter().filter(|s| !judged.contains_key(*s)).count();
        if unjudged > 0 {
            warnings.push(format!(
                "query {qid:?}: {unjudged} of the top {k} terms are unjudged"
            ));
        }
        let hits = top
            .iter()
            .filter(|s| judged.get(*s) == Some(&Label::Positive))
            .count();
        per_query.insert(qid.clone(), hits as f64 / k as f64);
    }
    if per_query.is_empty() {
        return Err(Error::Eval("no query has a positive expansion term".into()));
    }
    let mean = per_query.values().sum::<f64>() / per_query.len() as f64;
    Ok((
        IntrinsicPrecision {
            k,
            mean,
            per_query,
            excluded,
        },
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::text::{Analyzer, StemmerId, Stopwords};

    #[test]
    fn threshold_is_strict() {
        assert_eq!(Label::from_delta(0.001), Label::Neutral);
        assert_eq!(Label::from_delta(-0.001), Label::Neutral);
        assert_eq!(Label::from_delta(0.0011), Label::Positive);
        assert_eq!(Label::from_delta(-0.002), Label::Negative);
    }

    #[test]
    fn term_that_reaches_missed_doc_is_positive() {
        let a = Analyzer::new(StemmerId::None, Stopwords::none());
        let docs = vec![
            Document::new("d1", "jaguar car", &a),
            Document::new("d2", "automobile engine", &a),
            Document::new("d3", "forest cat", &a),
        ];
        let idx = Index::build(&docs, StemmerId::None).unwrap();
        let q = a.tokenize("car");
        let judged: BTreeMap<String, u32> = [("d1".to_string(), 1), ("d2".to_string(), 1)]
            .into_iter()
            .collect();
        let labels =
            intrinsic_labels(&idx, "q", &q, &["automobile", "forest"], &judged, 10.0).unwrap();
        assert_eq!(labels[0].delta_recall1000, 0.5);
        assert_eq!(labels[0].label, Label::Positive);
        assert_eq!(labels[1].delta_recall1000, 0.0);
        assert_eq!(labels[1].label, Label::Neutral);
        assert!(intrinsic_labels(&idx, "q", &q, &["zzz"], &judged, 10.0).is_err());
        assert!(
            intrinsic_labels(&idx, "q", &q, &["forest"], &BTreeMap::new(), 10.0)
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn precision_counts_positives_in_top_k() {
        let terms: Vec<String> = (0..30).map(|i| format!("t{i:02}")).collect();
        let judged: BTreeMap<String, Label> = terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                (
                    t.clone(),
                    if i % 3 == 0 {
                        Label::Positive
                    } else {
                        Label::Neutral
                    },
                )
            })
            .collect();
        let mut labels = BTreeMap::new();
        labels.insert("q1".to_string(), judged);
        labels.insert(
            "q2".to_string(),
            [("x".to_string(), Label::Negative)].into_iter().collect(),
        );
        let rankings: BTreeMap<String, Vec<String>> =
            [("q1".to_string(), terms.clone())].into_iter().collect();
        let (p, _) = intrinsic_precision(&rankings, &labels, 10).unwrap();
        // t00 t03 t06 t09 among the first ten
        assert_eq!(p.mean, 0.4);
        assert_eq!(p.excluded, ["q2"]);
    }

    #[test]
    fn pooling_unions_prefixes() {
        let a = vec!["x".to_string(), "y".to_string(), "z".to_string()];
        let b = vec!["w".to_string(), "x".to_string()];
        assert_eq!(
            pool_candidates([a.as_slice(), b.as_slice()], 2),
            ["w", "x", "y"]
        );
    }
}
