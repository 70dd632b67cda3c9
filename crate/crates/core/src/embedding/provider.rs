use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::QueryEmbedding;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderSource {
    Precomputed,
    Remote,
    DeterministicTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub dimension: usize,
    pub source: ProviderSource,
}

/// Model output for one input word sequence.
///
/// `pieces[0]` is the sequence-start special token and the last piece is the
/// sequence-end special token; `word_spans[i]` is the half-open piece range
/// of input word `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedText {
    pub pieces: Vec<Vec<f64>>,
    pub word_spans: Vec<(usize, usize)>,
}

impl EncodedText {
    pub(crate) fn validate(&self, words: usize, dim: usize) -> Result<()> {
        if self.word_spans.len() != words {
            return Err(Error::Provider(format!(
                "expected {words} word spans, got {}",
                self.word_spans.len()
            )));
        }
        if let Some(p) = self.pieces.iter().find(|p| p.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: p.len(),
            });
        }
        if self.pieces.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Provider("non-finite value in piece vectors".into()));
        }
        let mut prev_end = 1;
        for &(s, e) in &self.word_spans {
            if s < prev_end || s >= e || e + 1 > self.pieces.len() {
                return Err(Error::Provider(format!("malformed word span [{s}, {e})")));
            }
            prev_end = e;
        }
        Ok(())
    }
}

/// Source of contextual piece vectors.
///
/// Implementations must be deterministic: encoding the same words twice
/// yields the same vectors.
pub trait EmbeddingProvider: Send + Sync {
    fn descriptor(&self) -> ProviderDescriptor;

    /// WordPiece count of each word encoded on its own.
    fn piece_counts(&self, words: &[String]) -> Result<Vec<usize>>;

    /// Encodes each word sequence independently.
    fn encode(&self, texts: &[Vec<String>]) -> Result<Vec<EncodedText>>;
}

/// Reads precomputed query embeddings, one JSON object per line.
pub fn load_query_embeddings(reader: impl BufRead) -> Result<HashMap<String, QueryEmbedding>> {
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let q: QueryEmbedding =
            serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if let Some((stem, v)) = q.per_term.iter().find(|(_, v)| v.len() != q.centroid.len()) {
            return Err(Error::parse(
                i + 1,
                format!(
                    "term {stem:?} has dimension {} but centroid has {}",
                    v.len(),
                    q.centroid.len()
                ),
            ));
        }
        if out.insert(q.query_id.clone(), q).is_some() {
            return Err(Error::parse(i + 1, "duplicate query id"));
        }
    }
    Ok(out)
}

pub fn write_query_embeddings<'a>(
    mut writer: impl Write,
    queries: impl IntoIterator<Item = &'a QueryEmbedding>,
) -> Result<()> {
    for q in queries {
        serde_json::to_writer(&mut writer, q).map_err(|e| Error::Format(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
