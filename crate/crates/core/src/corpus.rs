//! Corpus ingestion: TREC SGML and JSONL.

use std::collections::HashSet;
use std::fmt;

use serde::Deserialize;

use crate::text::{Analyzer, Token};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub raw_text: String,
    pub tokens: Vec<Token>,
}

impl Document {
    pub fn new(
        doc_id: impl Into<String>,
        raw_text: impl Into<String>,
        analyzer: &Analyzer,
    ) -> Self {
        let raw_text = raw_text.into();
        let tokens = analyzer.tokenize(&raw_text);
        Self {
            doc_id: doc_id.into(),
            raw_text,
            tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordErrorKind {
    MissingDocno,
    /// The stream ended inside a `<DOC>` record.
    Truncated {
        last_complete: Option<String>,
    },
    DuplicateId(String),
}

/// A problem with a single SGML record; other records are still ingested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    /// Byte offset of the record's `<DOC>` tag.
    pub offset: usize,
    pub kind: RecordErrorKind,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            RecordErrorKind::MissingDocno => {
                write!(f, "record at byte {} has no <DOCNO>", self.offset)
            }
            RecordErrorKind::Truncated {
                last_complete: Some(id),
            } => write!(
                f,
                "truncated record at byte {}; last complete document was {id:?}",
                self.offset
            ),
            RecordErrorKind::Truncated {
                last_complete: None,
            } => write!(
                f,
                "truncated record at byte {}; no complete document precedes it",
                self.offset
            ),
            RecordErrorKind::DuplicateId(id) => {
                write!(
                    f,
                    "record at byte {} repeats document id {id:?}",
                    self.offset
                )
            }
        }
    }
}

#[derive(Debug, Default)]
pub struct SgmlIngest {
    pub documents: Vec<Document>,
    pub errors: Vec<RecordError>,
}

fn find(hay: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if from >= hay.len() {
        return None;
    }
    hay[from..]
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + from)
}

fn element<'a>(
    record: &'a [u8],
    open: &[u8],
    close: &[u8],
    from: usize,
) -> Option<(&'a [u8], usize)> {
    let start = find(record, open, from)? + open.len();
    let end = find(record, close, start)?;
    Some((&record[start..end], end + close.len()))
}

fn strip_markup(bytes: &[u8]) -> String {
    let text = String::from_utf8_lossy(bytes);
    let mut out = String::with_capacity(text.len());
    let mut in_tag = false;
    for c in text.chars() {
        match c {
            '<' => {
                in_tag = true;
                out.push(' ');
            }
            '>' if in_tag => in_tag = false,
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    let out = out
        .replace("&amp;", "&")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'");
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Concatenated `<HEADLINE>` and `<TEXT>` content in document order.
fn record_text(record: &[u8]) -> String {
    const FIELDS: [(&[u8], &[u8]); 2] = [(b"<TEXT>", b"</TEXT>"), (b"<HEADLINE>", b"</HEADLINE>")];
    let mut parts = Vec::new();
    let mut pos = 0;
    loop {
        let next = FIELDS
            .iter()
            .filter_map(|&(open, close)| find(record, open, pos).map(|at| (at, open, close)))
            .min_by_key(|&(at, _, _)| at);
        let Some((at, open, close)) = next else { break };
        match element(record, open, close, at) {
            Some((body, after)) => {
                let text = strip_markup(body);
                if !text.is_empty() {
                    parts.push(text);
                }
                pos = after;
            }
            None => break,
        }
    }
    parts.join(" ")
}

/// Parses concatenated `<DOC>` records.
///
/// Record-level problems are collected in [`SgmlIngest::errors`] rather than
/// aborting the whole stream.
pub fn ingest_trec_sgml(bytes: &[u8], analyzer: &Analyzer) -> SgmlIngest {
    let mut out = SgmlIngest::default();
    let mut seen = HashSet::new();
    let mut pos = 0;
    while let Some(start) = find(bytes, b"<DOC>", pos) {
        let Some(end) = find(bytes, b"</DOC>", start + 5) else {
            out.errors.push(RecordError {
                offset: start,
                kind: RecordErrorKind::Truncated {
                    last_complete: out.documents.last().map(|d: &Document| d.doc_id.clone()),
                },
            });
            break;
        };
        let record = &bytes[start + 5..end];
        pos = end + 6;
        let Some((docno, _)) = element(record, b"<DOCNO>", b"</DOCNO>", 0) else {
            out.errors.push(RecordError {
                offset: start,
                kind: RecordErrorKind::MissingDocno,
            });
            continue;
        };
        let doc_id = String::from_utf8_lossy(docno).trim().to_string();
        if doc_id.is_empty() {
            out.errors.push(RecordError {
                offset: start,
                kind: RecordErrorKind::MissingDocno,
            });
            continue;
        }
        if !seen.insert(doc_id.clone()) {
            out.errors.push(RecordError {
                offset: start,
                kind: RecordErrorKind::DuplicateId(doc_id),
            });
            continue;
        }
        out.documents
            .push(Document::new(doc_id, record_text(record), analyzer));
    }
    out
}

#[derive(Deserialize)]
struct JsonDoc {
    id: String,
    contents: String,
}

/// Parses one `{"id": .., "contents": ..}` object per line. Blank lines are skipped.
pub fn ingest_jsonl(bytes: &[u8], analyzer: &Analyzer) -> Result<Vec<Document>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Format(format!("JSONL corpus is not UTF-8: {e}")))?;
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: JsonDoc =
            serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if doc.id.is_empty() {
            return Err(Error::parse(i + 1, "empty document id"));
        }
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id));
        }
        docs.push(Document::new(doc.id, doc.contents, analyzer));
    }
    Ok(docs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    TrecSgml,
    Jsonl,
}

/// Guesses the corpus format from its first non-whitespace byte.
pub fn detect_format(bytes: &[u8]) -> Option<CorpusFormat> {
    match bytes.iter().find(|b| !b.is_ascii_whitespace())? {
        b'<' => Some(CorpusFormat::TrecSgml),
        b'{' => Some(CorpusFormat::Jsonl),
        _ => None,
    }
}
