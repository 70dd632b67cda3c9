//! Inverted index over stemmed, stopword-free token streams.
//!
//! Documents are stored in ascending `doc_id` order and postings reference
//! documents by that ordinal, so the built index (and its file encoding) does
//! not depend on ingestion order. Document length counts indexed
//! (non-stopword) tokens only.

mod format;
mod scoring;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::text::StemmerId;
use crate::{Error, Result};

pub use format::{FORMAT_VERSION, MAGIC};
pub(crate) use scoring::check_mu;
pub use scoring::{bm25_search, ql_log_score, Bm25Params};

pub type DocOrd = u32;
pub type TermId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: DocOrd,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TermEntry {
    pub stem: String,
    pub cf: u64,
    pub postings: Vec<Posting>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DocEntry {
    pub id: String,
    pub length: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectionStats {
    pub doc_count: u32,
    pub term_count: u32,
    pub total_tokens: u64,
}

#[derive(Debug, Clone)]
pub struct Index {
    stemmer: StemmerId,
    docs: Vec<DocEntry>,
    terms: Vec<TermEntry>,
    total_tokens: u64,
    doc_lookup: HashMap<String, DocOrd>,
    term_lookup: HashMap<String, TermId>,
    forward: Vec<Vec<(TermId, u32)>>,
}

impl PartialEq for Index {
    fn eq(&self, other: &Self) -> bool {
        self.stemmer == other.stemmer && self.docs == other.docs && self.terms == other.terms
    }
}

impl Index {
    /// Builds the index. Per-document term counting runs in parallel and the
    /// partial counts are merged in `doc_id` order.
    pub fn build(documents: &[Document], stemmer: StemmerId) -> Result<Self> {
        let mut order: Vec<&Document> = documents.iter().collect();
        order.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        for pair in order.windows(2) {
            if pair[0].doc_id == pair[1].doc_id {
                return Err(Error::DuplicateId(pair[0].doc_id.clone()));
            }
        }
        if let Some(d) = order.iter().find(|d| d.doc_id.is_empty()) {
            return Err(Error::InvalidArgument(format!(
                "empty doc_id for text {:?}",
                d.raw_text
            )));
        }

        let counts: Vec<(u32, BTreeMap<&str, u32>)> = order
            .par_iter()
            .map(|doc| {
                let mut tf = BTreeMap::new();
                let mut len = 0u32;
                for t in doc.tokens.iter().filter(|t| !t.is_stopword) {
                    *tf.entry(t.stem.as_str()).or_insert(0) += 1;
                    len += 1;
                }
                (len, tf)
            })
            .collect();

        let mut postings: BTreeMap<&str, Vec<Posting>> = BTreeMap::new();
        let mut docs = Vec::with_capacity(order.len());
        for (ord, (doc, (len, tf))) in order.iter().zip(&counts).enumerate() {
            docs.push(DocEntry {
                id: doc.doc_id.clone(),
                length: *len,
            });
            for (stem, &n) in tf {
                postings.entry(stem).or_default().push(Posting {
                    doc: ord as DocOrd,
                    tf: n,
                });
            }
        }
        let terms = postings
            .into_iter()
            .map(|(stem, postings)| TermEntry {
                stem: stem.to_string(),
                cf: postings.iter().map(|p| u64::from(p.tf)).sum(),
                postings,
            })
            .collect();
        Ok(Self::assemble(stemmer, docs, terms))
    }

    pub(crate) fn assemble(stemmer: StemmerId, docs: Vec<DocEntry>, terms: Vec<TermEntry>) -> Self {
        let doc_lookup = docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id.clone(), i as DocOrd))
            .collect();
        let term_lookup = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.stem.clone(), i as TermId))
            .collect();
        let mut forward = vec![Vec::new(); docs.len()];
        for (tid, term) in terms.iter().enumerate() {
            for p in &term.postings {
                forward[p.doc as usize].push((tid as TermId, p.tf));
            }
        }
        let total_tokens = docs.iter().map(|d| u64::from(d.length)).sum();
        Self {
            stemmer,
            docs,
            terms,
            total_tokens,
            doc_lookup,
            term_lookup,
            forward,
        }
    }

    pub fn stemmer(&self) -> StemmerId {
        self.stemmer
    }

    pub fn stats(&self) -> CollectionStats {
        CollectionStats {
            doc_count: self.docs.len() as u32,
            term_count: self.terms.len() as u32,
            total_tokens: self.total_tokens,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn avg_doc_len(&self) -> f64 {
        if self.docs.is_empty() {
            0.0
        } else {
            self.total_tokens as f64 / self.docs.len() as f64
        }
    }

    pub fn doc_ord(&self, doc_id: &str) -> Option<DocOrd> {
        self.doc_lookup.get(doc_id).copied()
    }

    pub fn doc_id(&self, ord: DocOrd) -> &str {
        &self.docs[ord as usize].id
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }

    pub fn doc_len(&self, ord: DocOrd) -> u32 {
        self.docs[ord as usize].length
    }

    pub fn term_id(&self, stem: &str) -> Option<TermId> {
        self.term_lookup.get(stem).copied()
    }

    pub fn term(&self, id: TermId) -> &str {
        &self.terms[id as usize].stem
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|t| t.stem.as_str())
    }

    pub fn collection_frequency(&self, stem: &str) -> u64 {
        self.term_id(stem).map_or(0, |t| self.terms[t as usize].cf)
    }

    pub fn document_frequency(&self, stem: &str) -> usize {
        self.term_id(stem)
            .map_or(0, |t| self.terms[t as usize].postings.len())
    }

    pub fn postings(&self, stem: &str) -> &[Posting] {
        self.term_id(stem)
            .map_or(&[], |t| &self.terms[t as usize].postings)
    }

    /// Term frequencies of one document, ascending by term id (= by stem).
    pub fn doc_terms(&self, ord: DocOrd) -> &[(TermId, u32)] {
        &self.forward[ord as usize]
    }

    pub fn tf(&self, stem: &str, ord: DocOrd) -> u32 {
        let postings = self.postings(stem);
        postings
            .binary_search_by_key(&ord, |p| p.doc)
            .map_or(0, |i| postings[i].tf)
    }

    /// Background probability p(w|C), floored at 1/(2·|C|) for unseen terms.
    pub fn collection_prob(&self, stem: &str) -> f64 {
        let total = self.total_tokens.max(1) as f64;
        match self.collection_frequency(stem) {
            0 => 1.0 / (2.0 * total),
            cf => cf as f64 / total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Documents for one query, descending by score with ties broken by ascending `doc_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub query_id: String,
    pub entries: Vec<ScoredDoc>,
}

impl Ranking {
    pub fn new(query_id: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            entries: Vec::new(),
        }
    }

    /// Sorts `(doc_id, score)` pairs into ranking order and keeps the first `k`.
    pub fn from_scores(query_id: impl Into<String>, scores: Vec<(String, f64)>, k: usize) -> Self {
        let mut entries: Vec<ScoredDoc> = scores
            .into_iter()
            .map(|(doc_id, score)| ScoredDoc { doc_id, score })
            .collect();
        sort_and_truncate(&mut entries, k);
        Self {
            query_id: query_id.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }
}

pub(crate) fn ranking_order(a: &ScoredDoc, b: &ScoredDoc) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

pub(crate) fn sort_and_truncate(entries: &mut Vec<ScoredDoc>, k: usize) {
    if entries.len() > k && k > 0 {
        entries.select_nth_unstable_by(k - 1, ranking_order);
        entries.truncate(k);
    }
    if k == 0 {
        entries.clear();
    }
    entries.sort_by(ranking_order);
}
