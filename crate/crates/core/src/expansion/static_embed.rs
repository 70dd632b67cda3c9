//! Expansion from a context-independent embedding table.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use super::{select_top, shifted_cosine, FeedbackSet, FilterPolicy, TermDistribution, TermWeights};
use crate::embedding::{mean_vector, MentionStore};
use crate::index::Index;
use crate::text::{content_stems, Analyzer, Stopwords, Token};
use crate::{Error, Result, Warnings};

/// One vector per stem.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticVectors {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl StaticVectors {
    pub fn from_map(vectors: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let dim = vectors.values().next().map_or(0, Vec::len);
        if let Some(v) = vectors.values().find(|v| v.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: v.len(),
            });
        }
        Ok(Self { dim, vectors })
    }

    /// Reads whitespace-separated `word v1 … vd` lines (GloVe / word2vec
    /// text layout; a leading `count dim` header line is skipped). Words are
    /// lowercased and stemmed with `analyzer`; words that share a stem are
    /// averaged.
    pub fn from_text(reader: impl BufRead, analyzer: &Analyzer) -> Result<Self> {
        let mut grouped: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
        let mut dim = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let values: Vec<&str> = fields.collect();
            if i == 0
                && values.len() == 1
                && word.parse::<u64>().is_ok()
                && values[0].parse::<u64>().is_ok()
            {
                continue;
            }
            let v = values
                .iter()
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::parse(i + 1, format!("bad vector component: {e}")))?;
            match dim {
                None if v.is_empty() => {
                    return Err(Error::parse(i + 1, "vector has no components"))
                }
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::parse(
                        i + 1,
                        format!("expected {d} components, found {}", v.len()),
                    ))
                }
                Some(_) => {}
            }
            grouped
                .entry(analyzer.stem(&word.to_lowercase()))
                .or_default()
                .push(v);
        }
        let vectors = grouped
            .into_iter()
            .map(|(s, vs)| Ok((s, mean_vector(&vs)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    /// Per-stem average of every contextual mention vector in the store.
    pub fn from_store(store: &MentionStore) -> Result<Self> {
        let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
        for doc_id in store.doc_ids() {
            for (stem, vectors) in store.doc(doc_id)?.iter() {
                let (sum, n) = sums
                    .entry(stem.to_string())
                    .or_insert_with(|| (vec![0.0; store.dim()], 0));
                for v in vectors {
                    sum.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
                    *n += 1;
                }
            }
        }
        let vectors = sums
            .into_iter()
            .map(|(stem, (mut sum, n))| {
                sum.iter_mut().for_each(|s| *s /= n as f64);
                (stem, sum)
            })
            .collect();
        Ok(Self {
            dim: store.dim(),
            vectors,
        })
    }

    pub fn write_text(&self, mut writer: impl Write) -> Result<()> {
        for (stem, v) in &self.vectors {
            write!(writer, "{stem}")?;
            for x in v {
                write!(writer, " {x}")?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, stem: &str) -> Option<&[f64]> {
        self.vectors.get(stem).map(Vec::as_slice)
    }

    pub fn stems(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }
}

/// Where candidate expansion terms come from.
#[derive(Debug, Clone, Copy)]
pub enum VocabScope<'a> {
    /// Every indexed stem.
    Global(&'a Index),
    /// Stems occurring in the feedback documents.
    Prf(&'a Index, &'a FeedbackSet),
}

impl VocabScope<'_> {
    fn stems(&self) -> Result<BTreeSet<&str>> {
        match *self {
            VocabScope::Global(index) => Ok(index.vocabulary().collect()),
            VocabScope::Prf(index, feedback) => {
                let mut out = BTreeSet::new();
                for fd in &feedback.docs {
                    let ord = index
                        .doc_ord(&fd.doc_id)
                        .ok_or_else(|| Error::UnknownDocument(fd.doc_id.clone()))?;
                    out.extend(index.doc_terms(ord).iter().map(|&(t, _)| index.term(t)));
                }
                Ok(out)
            }
        }
    }
}

/// δ(query centroid, v_w) for every admissible in-table candidate, where the
/// query centroid is the mean static vector of the query's in-table terms.
pub fn static_embed_weights(
    query_id: &str,
    query: &[Token],
    table: &StaticVectors,
    scope: VocabScope<'_>,
    filter: &FilterPolicy,
    stopwords: &Stopwords,
) -> Result<(TermWeights, Warnings)> {
    let mut warnings = Warnings::new();
    let mut known = Vec::new();
    for stem in content_stems(query) {
        match table.get(stem) {
            Some(v) => known.push(v),
            None => warnings.push(format!(
                "query {query_id:?}: term {stem:?} has no static vector"
            )),
        }
    }
    if known.is_empty() {
        return Err(Error::NoCandidates(format!(
            "query {query_id:?}: no query term has a static vector"
        )));
    }
    let centroid = mean_vector(&known)?;
    let weights: TermWeights = scope
        .stems()?
        .into_iter()
        .filter(|s| filter.admits(s, stopwords))
        .filter_map(|s| {
            table
                .get(s)
                .map(|v| (s.to_string(), shifted_cosine(&centroid, v)))
        })
        .collect();
    if weights.is_empty() {
        return Err(Error::NoCandidates(format!(
            "query {query_id:?}: no candidate term has a static vector"
        )));
    }
    Ok((weights, warnings))
}

pub fn static_embed_expand(
    query_id: &str,
    query: &[Token],
    table: &StaticVectors,
    scope: VocabScope<'_>,
    fb_terms: usize,
    filter: &FilterPolicy,
    stopwords: &Stopwords,
) -> Result<(TermDistribution, Warnings)> {
    let (w, warnings) = static_embed_weights(query_id, query, table, scope, filter, stopwords)?;
    Ok((select_top(query_id, &w, fb_terms)?, warnings))
}
