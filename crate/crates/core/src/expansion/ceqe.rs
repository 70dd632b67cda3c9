//! Expansion terms scored by the similarity of their contextual mentions in
//! feedback documents to the query's contextual vectors.

use super::{
    select_top, shifted_cosine, FeedbackSet, FilterPolicy, Pooling, TermDistribution, TermWeights,
};
use crate::embedding::{MentionStore, QueryEmbedding};
use crate::text::Stopwords;
use crate::{Error, Result, Warnings};

/// Lower bound applied to per-term probabilities before taking logs under
/// product pooling.
pub const MULPOOL_FLOOR: f64 = 1e-12;

/// p(w|Q, D) for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTermDistribution {
    /// Ascending by stem.
    pub terms: Vec<(String, f64)>,
    /// Product pooling hit [`MULPOOL_FLOOR`] for at least one term.
    pub floored: bool,
}

fn check_dims(query: &QueryEmbedding, pooling: Pooling, dim: usize) -> Result<()> {
    let mut dims = vec![query.centroid.len()];
    if pooling != Pooling::Centroid {
        if query.per_term.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "query {:?} has no per-term vectors",
                query.query_id
            )));
        }
        dims.extend(query.per_term.values().map(Vec::len));
    }
    match dims.into_iter().find(|&d| d != dim) {
        Some(found) => Err(Error::Dimension {
            expected: dim,
            found,
        }),
        None => Ok(()),
    }
}

/// Σ over a stem's mentions of δ(target, m), for every candidate stem.
fn similarity_mass(candidates: &[(String, Vec<Vec<f64>>)], target: &[f64]) -> Vec<f64> {
    candidates
        .iter()
        .map(|(_, ms)| ms.iter().map(|m| shifted_cosine(target, m)).sum())
        .collect()
}

fn normalized(mass: Vec<f64>) -> Option<Vec<f64>> {
    let z: f64 = mass.iter().sum();
    (z > 0.0).then(|| mass.into_iter().map(|s| s / z).collect())
}

/// Combines per-query-term distributions over the same candidates.
///
/// Returns the pooled distribution and whether the floor was applied.
pub(crate) fn pool(per_term: &[Vec<f64>], pooling: Pooling) -> (Vec<f64>, bool) {
    let n = per_term[0].len();
    if pooling == Pooling::Prod && per_term.len() > 1 {
        let mut floored = false;
        let logs: Vec<f64> = (0..n)
            .map(|i| {
                per_term
                    .iter()
                    .map(|p| {
                        if p[i] < MULPOOL_FLOOR {
                            floored = true;
                        }
                        p[i].max(MULPOOL_FLOOR).ln()
                    })
                    .sum()
            })
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        return (logs.into_iter().map(|l| (l - lse).exp()).collect(), floored);
    }
    // Max pooling, and product pooling of a single term (where both reduce
    // to renormalizing the one distribution).
    let f: Vec<f64> = (0..n)
        .map(|i| {
            per_term
                .iter()
                .map(|p| p[i])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let z: f64 = f.iter().sum();
    (f.into_iter().map(|x| x / z).collect(), false)
}

/// p(w|Q, D) over the filtered stems mentioned in one document.
///
/// `Centroid` compares mentions to the query centroid; `Max` and `Prod`
/// compare them to each query term and pool the per-term distributions.
/// Returns `None` when the document has no candidate with positive mass.
pub fn ceqe_doc_distribution<S: AsRef<str>>(
    mentions: impl IntoIterator<Item = (S, Vec<Vec<f64>>)>,
    query: &QueryEmbedding,
    pooling: Pooling,
    filter: &FilterPolicy,
    stopwords: &Stopwords,
) -> Result<Option<DocTermDistribution>> {
    let candidates: Vec<(String, Vec<Vec<f64>>)> = mentions
        .into_iter()
        .filter(|(s, ms)| !ms.is_empty() && filter.admits(s.as_ref(), stopwords))
        .map(|(s, ms)| (s.as_ref().to_string(), ms))
        .collect();
    if candidates.is_empty() {
        return Ok(None);
    }
    let (probs, floored) = match pooling {
        Pooling::Centroid => match normalized(similarity_mass(&candidates, &query.centroid)) {
            Some(p) => (p, false),
            None => return Ok(None),
        },
        Pooling::Max | Pooling::Prod => {
            let mut per_term = Vec::with_capacity(query.per_term.len());
            for v in query.per_term.values() {
                match normalized(similarity_mass(&candidates, v)) {
                    Some(p) => per_term.push(p),
                    None => return Ok(None),
                }
            }
            if per_term.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "query {:?} has no per-term vectors",
                    query.query_id
                )));
            }
            pool(&per_term, pooling)
        }
    };
    Ok(Some(DocTermDistribution {
        terms: candidates.into_iter().map(|(s, _)| s).zip(probs).collect(),
        floored,
    }))
}

/// Σ_D p(w|Q, D)·p(D|Q) over the feedback set.
pub fn ceqe_weights(
    feedback: &FeedbackSet,
    store: &MentionStore,
    query: &QueryEmbedding,
    pooling: Pooling,
    filter: &FilterPolicy,
    stopwords: &Stopwords,
) -> Result<(TermWeights, Warnings)> {
    check_dims(query, pooling, store.dim())?;
    let mut weights = TermWeights::new();
    let mut warnings = Warnings::new();
    for fd in &feedback.docs {
        let doc = store.doc(&fd.doc_id)?;
        match ceqe_doc_distribution(doc.iter(), query, pooling, filter, stopwords)? {
            None => warnings.push(format!(
                "query {:?}: feedback document {:?} has no candidate mentions with positive similarity ({}); skipped",
                feedback.query_id,
                fd.doc_id,
                filter.describe()
            )),
            Some(dist) => {
                if dist.floored {
                    warnings.push(format!(
                        "query {:?}: per-term probability floored at {MULPOOL_FLOOR:e} in {:?}",
                        feedback.query_id, fd.doc_id
                    ));
                }
                for (stem, p) in dist.terms {
                    *weights.entry(stem).or_insert(0.0) += p * fd.posterior;
                }
            }
        }
    }
    if weights.is_empty() {
        return Err(Error::NoCandidates(format!(
            "query {:?}: no feedback document has candidate mentions",
            feedback.query_id
        )));
    }
    Ok((weights, warnings))
}

/// Expansion from similarity to the query centroid.
pub fn ceqe_centroid(
    feedback: &FeedbackSet,
    store: &MentionStore,
    query: &QueryEmbedding,
    fb_terms: usize,
    filter: &FilterPolicy,
    stopwords: &Stopwords,
) -> Result<(TermDistribution, Warnings)> {
    let (w, warnings) = ceqe_weights(feedback, store, query, Pooling::Centroid, filter, stopwords)?;
    Ok((select_top(&feedback.query_id, &w, fb_terms)?, warnings))
}

/// Expansion from per-query-term similarities combined by `pooling`
/// (`Max` or `Prod`).
pub fn ceqe_term_pool(
    feedback: &FeedbackSet,
    store: &MentionStore,
    query: &QueryEmbedding,
    pooling: Pooling,
    fb_terms: usize,
    filter: &FilterPolicy,
    stopwords: &Stopwords,
) -> Result<(TermDistribution, Warnings)> {
    if pooling == Pooling::Centroid {
        return Err(Error::InvalidArgument(
            "term pooling must be max or prod".into(),
        ));
    }
    let (w, warnings) = ceqe_weights(feedback, store, query, pooling, filter, stopwords)?;
    Ok((select_top(&feedback.query_id, &w, fb_terms)?, warnings))
}
