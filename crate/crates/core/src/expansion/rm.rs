use super::{select_top, FeedbackSet, FilterPolicy, TermDistribution, TermWeights};
use crate::index::Index;
use crate::text::Stopwords;
use crate::{Error, Result};

/// Relevance-model mass Σ_D p(w|D)·p(D|Q), with p(w|D) the document MLE.
pub fn rm_weights(
    feedback: &FeedbackSet,
    index: &Index,
    filter: &FilterPolicy,
    stopwords: &Stopwords,
) -> Result<TermWeights> {
    let mut weights = TermWeights::new();
    for fd in &feedback.docs {
        let ord = index
            .doc_ord(&fd.doc_id)
            .ok_or_else(|| Error::UnknownDocument(fd.doc_id.clone()))?;
        let len = f64::from(index.doc_len(ord));
        if len == 0.0 {
            continue;
        }
        for &(tid, tf) in index.doc_terms(ord) {
            let stem = index.term(tid);
            if filter.admits(stem, stopwords) {
                *weights.entry(stem.to_string()).or_insert(0.0) +=
                    f64::from(tf) / len * fd.posterior;
            }
        }
    }
    if weights.is_empty() {
        return Err(Error::NoCandidates(format!(
            "query {:?}: no feedback term passes the filter",
            feedback.query_id
        )));
    }
    Ok(weights)
}

/// Top `fb_terms` of the relevance model, renormalized.
pub fn rm_expand(
    feedback: &FeedbackSet,
    index: &Index,
    fb_terms: usize,
    filter: &FilterPolicy,
    stopwords: &Stopwords,
) -> Result<TermDistribution> {
    select_top(
        &feedback.query_id,
        &rm_weights(feedback, index, filter, stopwords)?,
        fb_terms,
    )
}
