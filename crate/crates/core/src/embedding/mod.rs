//! Contextual mention vectors: chunking, WordPiece aggregation, query
//! embeddings, the on-disk mention store and embedding providers.

mod extract;
mod provider;
mod remote;
mod store;
mod test_embedder;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::text::Token;
use crate::{Error, Result, Warnings};

pub use extract::{extract_mentions, plan_chunks, ChunkPlanRecord};
pub use provider::{
    load_query_embeddings, write_query_embeddings, EmbeddingProvider, EncodedText,
    ProviderDescriptor, ProviderSource,
};
pub use remote::{RemoteConfig, RemoteProvider, WireRequest, WireResponse, WireText};
pub use store::{DocMentions, MentionStore, MentionStoreWriter, STORE_MAGIC, STORE_VERSION};
pub use test_embedder::{
    deterministic_test_embedder, PieceModel, TestEmbedder, TestEmbedderConfig,
};

/// A run of consecutive document tokens encoded together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_index: u32,
    /// Half-open token range `[start, end)` into the document's token list.
    pub start: u32,
    pub end: u32,
    /// Set when the chunk holds a single word whose pieces exceed the budget.
    pub truncated: bool,
}

impl Chunk {
    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// One occurrence of a word in a document chunk, with its context vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionEmbedding {
    pub stem: String,
    pub doc_id: String,
    pub chunk_index: u32,
    /// Token position within the document.
    pub position: u32,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEmbedding {
    pub query_id: String,
    /// Mean over every query piece, special tokens included.
    pub centroid: Vec<f64>,
    /// Per non-stopword query stem, special tokens excluded.
    pub per_term: BTreeMap<String, Vec<f64>>,
}

impl QueryEmbedding {
    pub fn dim(&self) -> usize {
        self.centroid.len()
    }
}

/// Mean of a set of equal-length vectors.
pub(crate) fn mean_vector<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Empty("no vectors to average".into()))?;
    let dim = first.as_ref().len();
    let mut acc = vec![0.0; dim];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: v.len(),
            });
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Averages piece vectors into word vectors, one per span.
pub fn aggregate_wordpieces(
    pieces: &[Vec<f64>],
    spans: &[(usize, usize)],
) -> Result<Vec<Vec<f64>>> {
    if let Some(first) = pieces.first() {
        if let Some(bad) = pieces.iter().find(|p| p.len() != first.len()) {
            return Err(Error::Dimension {
                expected: first.len(),
                found: bad.len(),
            });
        }
    }
    spans
        .iter()
        .map(|&(start, end)| {
            if start >= end {
                return Err(Error::InvalidArgument(format!(
                    "empty word span [{start}, {end})"
                )));
            }
            if end > pieces.len() {
                return Err(Error::InvalidArgument(format!(
                    "word span [{start}, {end}) exceeds {} pieces",
                    pieces.len()
                )));
            }
            mean_vector(&pieces[start..end])
        })
        .collect()
}

/// Greedy left-to-right packing of whole words into chunks of at most
/// `max_pieces` pieces, two of which are reserved for the start/end special
/// tokens. A word that alone exceeds the budget gets its own chunk, marked
/// truncated.
pub fn chunk_document(
    doc: &Document,
    max_pieces: usize,
    pieces_of: impl Fn(&Token) -> usize,
) -> Result<(Vec<Chunk>, Warnings)> {
    if max_pieces < 2 {
        return Err(Error::InvalidArgument(format!(
            "max_pieces must be >= 2, got {max_pieces}"
        )));
    }
    let budget = max_pieces - 2;
    let mut chunks: Vec<Chunk> = Vec::new();
    let mut warnings = Warnings::new();
    let mut start = 0usize;
    let mut used = 0usize;

    let close = |chunks: &mut Vec<Chunk>, start: usize, end: usize, truncated: bool| {
        chunks.push(Chunk {
            doc_id: doc.doc_id.clone(),
            chunk_index: chunks.len() as u32,
            start: start as u32,
            end: end as u32,
            truncated,
        });
    };

    for (i, tok) in doc.tokens.iter().enumerate() {
        let n = pieces_of(tok);
        if n > budget {
            if i > start {
                close(&mut chunks, start, i, false);
            }
            warnings.push(format!(
                "{}: word {:?} at position {} has {n} pieces, truncated to {budget}",
                doc.doc_id, tok.surface, tok.position
            ));
            close(&mut chunks, i, i + 1, true);
            start = i + 1;
            used = 0;
            continue;
        }
        if used + n > budget {
            close(&mut chunks, start, i, false);
            start = i;
            used = 0;
        }
        used += n;
    }
    if start < doc.tokens.len() {
        close(&mut chunks, start, doc.tokens.len(), false);
    }
    Ok((chunks, warnings))
}

/// Encodes a query and derives its centroid and per-term vectors.
pub fn embed_query(
    query_id: &str,
    tokens: &[Token],
    provider: &dyn EmbeddingProvider,
) -> Result<QueryEmbedding> {
    if tokens.is_empty() {
        return Err(Error::Empty(format!("query {query_id:?} has no tokens")));
    }
    let words: Vec<String> = tokens.iter().map(|t| t.surface.clone()).collect();
    let encoded = provider
        .encode(std::slice::from_ref(&words))?
        .pop()
        .ok_or_else(|| Error::Provider("provider returned no encoding".into()))?;
    if encoded.word_spans.len() != tokens.len() {
        return Err(Error::Provider(format!(
            "provider returned {} word spans for {} words",
            encoded.word_spans.len(),
            tokens.len()
        )));
    }
    let centroid = mean_vector(&encoded.pieces)?;
    let words = aggregate_wordpieces(&encoded.pieces, &encoded.word_spans)?;

    let mut grouped: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for (tok, v) in tokens.iter().zip(words) {
        if !tok.is_stopword {
            grouped.entry(tok.stem.clone()).or_default().push(v);
        }
    }
    let per_term = grouped
        .into_iter()
        .map(|(stem, vs)| Ok((stem, mean_vector(&vs)?)))
        .collect::<Result<_>>()?;
    Ok(QueryEmbedding {
        query_id: query_id.to_string(),
        centroid,
        per_term,
    })
}
