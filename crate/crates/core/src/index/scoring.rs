use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{DocOrd, Index, Ranking};
use crate::text::Token;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "BM25 k1 must be > 0, got {}",
                self.k1
            )));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidArgument(format!(
                "BM25 b must be in [0, 1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

/// Robertson–Sparck Jones idf with 0.5 smoothing, shifted by one inside the
/// log so it stays positive for terms in more than half the collection.
pub(crate) fn bm25_idf(doc_count: usize, df: usize) -> f64 {
    let n = doc_count as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Top-`k` BM25 ranking. Stopword-flagged query tokens are ignored and
/// repeated query terms count once per occurrence. A query with no
/// in-vocabulary terms yields an empty ranking.
pub fn bm25_search(
    index: &Index,
    query_id: &str,
    query: &[Token],
    k: usize,
    params: Bm25Params,
) -> Result<Ranking> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    params.validate()?;

    let mut qtf: Vec<(&str, u32)> = Vec::new();
    for t in query.iter().filter(|t| !t.is_stopword) {
        match qtf.iter_mut().find(|(s, _)| *s == t.stem) {
            Some((_, n)) => *n += 1,
            None => qtf.push((&t.stem, 1)),
        }
    }

    let avgdl = index.avg_doc_len();
    let mut acc: HashMap<DocOrd, f64> = HashMap::new();
    for (stem, count) in qtf {
        let postings = index.postings(stem);
        if postings.is_empty() {
            continue;
        }
        let idf = bm25_idf(index.doc_count(), postings.len());
        for p in postings {
            let tf = f64::from(p.tf);
            let dl = f64::from(index.doc_len(p.doc));
            let norm = params.k1 * (1.0 - params.b + params.b * dl / avgdl);
            let s = f64::from(count) * idf * tf * (params.k1 + 1.0) / (tf + norm);
            *acc.entry(p.doc).or_insert(0.0) += s;
        }
    }

    let scores = acc
        .into_iter()
        .map(|(doc, s)| (index.doc_id(doc).to_string(), s))
        .collect();
    Ok(Ranking::from_scores(query_id, scores, k))
}

/// log[(tf + μ·p(w|C)) / (|D| + μ)] for a single term.
pub(crate) fn ql_term_log(index: &Index, stem: &str, doc: DocOrd, mu: f64) -> f64 {
    let tf = f64::from(index.tf(stem, doc));
    let dl = f64::from(index.doc_len(doc));
    ((tf + mu * index.collection_prob(stem)) / (dl + mu)).ln()
}

pub(crate) fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "Dirichlet mu must be > 0, got {mu}"
        )))
    }
}

/// Dirichlet-smoothed query log-likelihood of one document.
pub fn ql_log_score(index: &Index, query: &[Token], doc_id: &str, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    let doc = index
        .doc_ord(doc_id)
        .ok_or_else(|| Error::UnknownDocument(doc_id.to_string()))?;
    Ok(query
        .iter()
        .filter(|t| !t.is_stopword)
        .map(|t| ql_term_log(index, &t.stem, doc, mu))
        .sum())
}
