use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::provider::EmbeddingProvider;
use super::store::MentionStoreWriter;
use super::{aggregate_wordpieces, chunk_document, Chunk, MentionEmbedding};
use crate::corpus::Document;
use crate::{Error, Result, Warnings};

/// One line of an extraction plan: a chunk plus the words an external
/// extractor must encode and the stems to key their mentions by.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlanRecord {
    #[serde(flatten)]
    pub chunk: Chunk,
    pub words: Vec<String>,
    pub stems: Vec<String>,
    pub stopword: Vec<bool>,
}

fn doc_chunks(
    doc: &Document,
    provider: &dyn EmbeddingProvider,
    max_pieces: usize,
) -> Result<(Vec<Chunk>, Warnings)> {
    let words: Vec<String> = doc.tokens.iter().map(|t| t.surface.clone()).collect();
    let counts = if words.is_empty() {
        Vec::new()
    } else {
        provider.piece_counts(&words)?
    };
    if counts.len() != words.len() {
        return Err(Error::Provider(format!(
            "{} piece counts for {} words",
            counts.len(),
            words.len()
        )));
    }
    chunk_document(doc, max_pieces, |t| counts[t.position as usize])
}

/// Chunk plan for every document, in input order.
pub fn plan_chunks(
    docs: &[Document],
    provider: &dyn EmbeddingProvider,
    max_pieces: usize,
) -> Result<(Vec<ChunkPlanRecord>, Warnings)> {
    let per_doc: Vec<(Vec<ChunkPlanRecord>, Warnings)> = docs
        .par_iter()
        .map(|doc| {
            let (chunks, warnings) = doc_chunks(doc, provider, max_pieces)?;
            let records = chunks
                .into_iter()
                .map(|chunk| {
                    let toks = &doc.tokens[chunk.start as usize..chunk.end as usize];
                    ChunkPlanRecord {
                        words: toks.iter().map(|t| t.surface.clone()).collect(),
                        stems: toks.iter().map(|t| t.stem.clone()).collect(),
                        stopword: toks.iter().map(|t| t.is_stopword).collect(),
                        chunk,
                    }
                })
                .collect();
            Ok((records, warnings))
        })
        .collect::<Result<_>>()?;
    let mut warnings = Warnings::new();
    let mut out = Vec::new();
    for (r, w) in per_doc {
        out.extend(r);
        warnings.extend(w);
    }
    Ok((out, warnings))
}

/// Encodes every chunk and records one mention per non-stopword token.
/// Words in truncated chunks get no mention.
pub fn extract_mentions(
    docs: &[Document],
    provider: &dyn EmbeddingProvider,
    max_pieces: usize,
) -> Result<(MentionStoreWriter, Warnings)> {
    let dim = provider.descriptor().dimension;
    let per_doc: Vec<(Vec<MentionEmbedding>, Warnings)> = docs
        .par_iter()
        .map(|doc| {
            let (chunks, warnings) = doc_chunks(doc, provider, max_pieces)?;
            let live: Vec<&Chunk> = chunks
                .iter()
                .filter(|c| !c.truncated && !c.is_empty())
                .collect();
            let texts: Vec<Vec<String>> = live
                .iter()
                .map(|c| {
                    doc.tokens[c.start as usize..c.end as usize]
                        .iter()
                        .map(|t| t.surface.clone())
                        .collect()
                })
                .collect();
            let encoded = if texts.is_empty() {
                Vec::new()
            } else {
                provider.encode(&texts)?
            };
            let mut mentions = Vec::new();
            for ((chunk, words), enc) in live.iter().zip(&texts).zip(encoded) {
                enc.validate(words.len(), dim)?;
                let vectors = aggregate_wordpieces(&enc.pieces, &enc.word_spans)?;
                let toks = &doc.tokens[chunk.start as usize..chunk.end as usize];
                for (tok, v) in toks.iter().zip(vectors) {
                    if tok.is_stopword {
                        continue;
                    }
                    mentions.push(MentionEmbedding {
                        stem: tok.stem.clone(),
                        doc_id: doc.doc_id.clone(),
                        chunk_index: chunk.chunk_index,
                        position: tok.position,
                        vector: v.iter().map(|&x| x as f32).collect(),
                    });
                }
            }
            Ok((mentions, warnings))
        })
        .collect::<Result<_>>()?;

    let mut writer = MentionStoreWriter::new(dim);
    let mut warnings = Warnings::new();
    for (doc, (mentions, w)) in docs.iter().zip(per_doc) {
        writer.add_doc(&doc.doc_id);
        writer.extend(mentions)?;
        warnings.extend(w);
    }
    Ok((writer, warnings))
}
