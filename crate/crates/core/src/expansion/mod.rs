//! Feedback term distributions and expanded-query execution.
//!
//! Every expansion model is computed in two steps: a `*_weights` function
//! produces unnormalized mass for every admissible candidate stem, then
//! [`select_top`] keeps the `fb_terms` heaviest stems (ties by ascending stem)
//! and renormalizes. Keeping the raw weights around lets parameter sweeps
//! reuse them across `fb_terms` values.

mod ceqe;
mod rm;
mod static_embed;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::index::{check_mu, Index, Ranking, ScoredDoc};
use crate::text::{content_stems, Stopwords, Token};
use crate::{Error, Result, Warnings};

pub use ceqe::{ceqe_centroid, ceqe_doc_distribution, ceqe_term_pool, ceqe_weights, MULPOOL_FLOOR};
pub use rm::{rm_expand, rm_weights};
pub use static_embed::{static_embed_expand, static_embed_weights, StaticVectors, VocabScope};

/// Unnormalized candidate mass, keyed by stem.
pub type TermWeights = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    Centroid,
    Max,
    Prod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    /// (1 + cos) / 2
    #[default]
    CosineShifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionParams {
    pub fb_docs: usize,
    pub fb_terms: usize,
    pub lambda: f64,
    #[serde(default)]
    pub similarity: Similarity,
    pub pooling: Pooling,
}

impl Default for ExpansionParams {
    fn default() -> Self {
        Self {
            fb_docs: 10,
            fb_terms: 50,
            lambda: 0.5,
            similarity: Similarity::CosineShifted,
            pooling: Pooling::Max,
        }
    }
}

impl ExpansionParams {
    pub fn validate(&self) -> Result<()> {
        if self.fb_docs == 0 {
            return Err(Error::InvalidArgument("fb_docs must be >= 1".into()));
        }
        if self.fb_terms == 0 {
            return Err(Error::InvalidArgument("fb_terms must be >= 1".into()));
        }
        check_lambda(self.lambda)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "lambda must be in [0, 1], got {lambda}"
        )))
    }
}

/// Candidate-term filter settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterPolicy {
    pub drop_stopwords: bool,
    pub min_length: usize,
    pub drop_digits: bool,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            drop_stopwords: true,
            min_length: 2,
            drop_digits: true,
        }
    }
}

impl FilterPolicy {
    pub fn off() -> Self {
        Self {
            drop_stopwords: false,
            min_length: 0,
            drop_digits: false,
        }
    }

    pub fn admits(&self, stem: &str, stopwords: &Stopwords) -> bool {
        !(self.drop_stopwords && stopwords.contains(stem)
            || stem.chars().count() < self.min_length
            || self.drop_digits && !stem.is_empty() && stem.chars().all(|c| c.is_ascii_digit()))
    }

    fn describe(&self) -> String {
        format!(
            "drop_stopwords={}, min_length={}, drop_digits={}",
            self.drop_stopwords, self.min_length, self.drop_digits
        )
    }
}

/// Order-preserving filter over candidate stems.
pub fn candidate_filter<S: AsRef<str> + Clone>(
    stems: &[S],
    policy: &FilterPolicy,
    stopwords: &Stopwords,
) -> Vec<S> {
    stems
        .iter()
        .filter(|s| policy.admits(s.as_ref(), stopwords))
        .cloned()
        .collect()
}

/// Normalized weights over stems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDistribution {
    pub query_id: String,
    pub weights: BTreeMap<String, f64>,
}

impl TermDistribution {
    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, stem: &str) -> f64 {
        self.weights.get(stem).copied().unwrap_or(0.0)
    }

    /// Descending by weight, ties by ascending stem.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.weights.iter().map(|(s, &w)| (s.as_str(), w)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (stem, w) in self.ranked() {
            let _ = writeln!(out, "{stem}\t{w}");
        }
        out
    }

    pub fn from_tsv(query_id: &str, text: &str) -> Result<Self> {
        let mut weights = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (stem, w) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(i + 1, "expected stem<TAB>weight"))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad weight {w:?}")))?;
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::parse(
                    i + 1,
                    format!("weight must be finite and >= 0, got {w}"),
                ));
            }
            if weights.insert(stem.to_string(), w).is_some() {
                return Err(Error::parse(i + 1, format!("duplicate stem {stem:?}")));
            }
        }
        Ok(Self {
            query_id: query_id.to_string(),
            weights,
        })
    }

    /// Maximum-likelihood model of the non-stopword query stems.
    pub fn query_mle(query_id: &str, tokens: &[Token]) -> Result<Self> {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for stem in content_stems(tokens) {
            *counts.entry(stem.to_string()).or_insert(0.0) += 1.0;
        }
        let n: f64 = counts.values().sum();
        if n == 0.0 {
            return Err(Error::Empty(format!(
                "query {query_id:?} has no content terms"
            )));
        }
        counts.values_mut().for_each(|c| *c /= n);
        Ok(Self {
            query_id: query_id.to_string(),
            weights: counts,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermWeight {
    pub stem: String,
    pub weight: f64,
}

/// JSON wrapper recording how a distribution was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionEnvelope {
    pub query_id: String,
    pub method: String,
    pub params: ExpansionParams,
    pub terms: Vec<TermWeight>,
}

impl ExpansionEnvelope {
    pub fn new(method: &str, params: ExpansionParams, dist: &TermDistribution) -> Self {
        Self {
            query_id: dist.query_id.clone(),
            method: method.to_string(),
            params,
            terms: dist
                .ranked()
                .into_iter()
                .map(|(s, w)| TermWeight {
                    stem: s.to_string(),
                    weight: w,
                })
                .collect(),
        }
    }

    pub fn distribution(&self) -> TermDistribution {
        TermDistribution {
            query_id: self.query_id.clone(),
            weights: self
                .terms
                .iter()
                .map(|t| (t.stem.clone(), t.weight))
                .collect(),
        }
    }
}

/// Keeps the `fb_terms` heaviest stems with positive weight and renormalizes.
pub fn select_top(
    query_id: &str,
    weights: &TermWeights,
    fb_terms: usize,
) -> Result<TermDistribution> {
    if fb_terms == 0 {
        return Err(Error::InvalidArgument("fb_terms must be >= 1".into()));
    }
    let mut ranked: Vec<(&String, f64)> = weights
        .iter()
        .filter(|(_, &w)| w > 0.0 && w.is_finite())
        .map(|(s, &w)| (s, w))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(fb_terms);
    let total: f64 = ranked.iter().map(|(_, w)| w).sum();
    if ranked.is_empty() || total <= 0.0 {
        return Err(Error::NoCandidates(format!(
            "query {query_id:?} has no term with positive weight"
        )));
    }
    Ok(TermDistribution {
        query_id: query_id.to_string(),
        weights: ranked
            .into_iter()
            .map(|(s, w)| (s.clone(), w / total))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackDoc {
    pub doc_id: String,
    pub ql_log_score: f64,
    pub posterior: f64,
}

/// Pseudo-relevant documents with their query posteriors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSet {
    pub query_id: String,
    pub docs: Vec<FeedbackDoc>,
}

/// Softmax of log scores, shifted by the maximum for stability.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Takes the top `fb_docs` of a first-pass ranking and converts their
/// Dirichlet query log-likelihoods into posteriors p(D|Q) under a uniform
/// document prior.
pub fn compute_posteriors(
    ranking: &Ranking,
    query: &[Token],
    fb_docs: usize,
    index: &Index,
    mu: f64,
) -> Result<(FeedbackSet, Warnings)> {
    if fb_docs == 0 {
        return Err(Error::InvalidArgument("fb_docs must be >= 1".into()));
    }
    if ranking.is_empty() {
        return Err(Error::Empty(format!(
            "first-pass ranking for {:?} is empty",
            ranking.query_id
        )));
    }
    let mut warnings = Warnings::new();
    if ranking.len() < fb_docs {
        warnings.push(format!(
            "query {:?}: only {} feedback documents available, {fb_docs} requested",
            ranking.query_id,
            ranking.len()
        ));
    }
    let top = &ranking.entries[..fb_docs.min(ranking.len())];
    let scores = top
        .iter()
        .map(|e| crate::index::ql_log_score(index, query, &e.doc_id, mu))
        .collect::<Result<Vec<f64>>>()?;
    let posteriors = softmax(&scores);
    let docs = top
        .iter()
        .zip(scores.iter().zip(posteriors))
        .map(|(e, (&s, p))| FeedbackDoc {
            doc_id: e.doc_id.clone(),
            ql_log_score: s,
            posterior: p,
        })
        .collect();
    Ok((
        FeedbackSet {
            query_id: ranking.query_id.clone(),
            docs,
        },
        warnings,
    ))
}

/// (1 − λ)·p_MLE(w|Q) + λ·p_exp(w).
pub fn interpolate(
    query: &[Token],
    expansion: &TermDistribution,
    lambda: f64,
) -> Result<TermDistribution> {
    check_lambda(lambda)?;
    let exp_total = expansion.total();
    let exp_scale = if (exp_total - 1.0).abs() > 1e-12 && exp_total > 0.0 {
        1.0 / exp_total
    } else {
        1.0
    };

    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    if lambda < 1.0 {
        let mle = TermDistribution::query_mle(&expansion.query_id, query)?;
        for (s, w) in mle.weights {
            out.insert(s, (1.0 - lambda) * w);
        }
    }
    if lambda > 0.0 {
        for (s, &w) in &expansion.weights {
            *out.entry(s.clone()).or_insert(0.0) += lambda * w * exp_scale;
        }
    }
    out.retain(|_, w| *w > 0.0);
    if out.is_empty() {
        return Err(Error::Empty(format!(
            "interpolated model for {:?} is empty",
            expansion.query_id
        )));
    }
    Ok(TermDistribution {
        query_id: expansion.query_id.clone(),
        weights: out,
    })
}

/// Ranks documents by Σ_w weight(w)·log p(w|D) under Dirichlet smoothing.
///
/// Only documents containing at least one model term are scored.
pub fn execute_expanded(
    index: &Index,
    model: &TermDistribution,
    mu: f64,
    k: usize,
) -> Result<Ranking> {
    check_mu(mu)?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    // Σ_w q_w·ln((tf + μp)/(|D| + μ)) =
    //   Σ_w q_w·ln(μp) + Σ_{w ∈ D} q_w·[ln(tf + μp) − ln(μp)] − (Σ_w q_w)·ln(|D| + μ)
    let mut background = 0.0;
    let mut total_weight = 0.0;
    let mut acc: HashMap<u32, f64> = HashMap::new();
    for (stem, &w) in &model.weights {
        if w <= 0.0 {
            continue;
        }
        let smoothed = mu * index.collection_prob(stem);
        let ln_bg = smoothed.ln();
        background += w * ln_bg;
        total_weight += w;
        for p in index.postings(stem) {
            *acc.entry(p.doc).or_insert(0.0) += w * ((f64::from(p.tf) + smoothed).ln() - ln_bg);
        }
    }
    let mut entries: Vec<ScoredDoc> = acc
        .into_iter()
        .map(|(doc, s)| ScoredDoc {
            doc_id: index.doc_id(doc).to_string(),
            score: background + s - total_weight * (f64::from(index.doc_len(doc)) + mu).ln(),
        })
        .collect();
    crate::index::sort_and_truncate(&mut entries, k);
    Ok(Ranking {
        query_id: model.query_id.clone(),
        entries,
    })
}

/// Shifted cosine similarity in [0, 1]. Zero vectors have cosine 0.
pub fn shifted_cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.5;
    }
    let cos = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
    (1.0 + cos) / 2.0
}
