//! Mention store file. All integers and floats are little-endian.
//!
//! ```text
//! header   magic "CEQEMST\0" (8) | version u32 | dim u32 | doc_count u32
//!          | entry_count u32 | mention_count u64                      (32 bytes)
//! docs     doc_count × { id_len u32, id bytes, first_entry u32, entry_count u32 }
//!          ascending by id
//! entries  entry_count × { stem_len u32, stem bytes, first_mention u64, mention_count u32 }
//!          ascending by (doc id, stem)
//! padding  zero bytes up to a multiple of 4
//! meta     mention_count × { chunk_index u32, position u32 }
//!          ascending by (doc id, stem, chunk_index, position)
//! vectors  mention_count × dim × f32
//! ```
//!
//! Documents without any mention still appear in the doc table so that
//! "unknown document" and "no mentions" can be told apart.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use memmap2::Mmap;

use super::MentionEmbedding;
use crate::{Error, Result};

pub const STORE_MAGIC: &[u8; 8] = b"CEQEMST\0";
pub const STORE_VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

/// Accumulates mentions and serializes them in store order.
#[derive(Debug, Clone)]
pub struct MentionStoreWriter {
    dim: usize,
    docs: BTreeSet<String>,
    mentions: Vec<MentionEmbedding>,
}

impl MentionStoreWriter {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            docs: BTreeSet::new(),
            mentions: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Registers a document, even if it ends up with no mentions.
    pub fn add_doc(&mut self, doc_id: &str) {
        if !self.docs.contains(doc_id) {
            self.docs.insert(doc_id.to_string());
        }
    }

    pub fn push(&mut self, mention: MentionEmbedding) -> Result<()> {
        if mention.vector.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: mention.vector.len(),
            });
        }
        if mention.vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite vector for {:?} in {:?}",
                mention.stem, mention.doc_id
            )));
        }
        self.add_doc(&mention.doc_id);
        self.mentions.push(mention);
        Ok(())
    }

    pub fn extend(&mut self, mentions: impl IntoIterator<Item = MentionEmbedding>) -> Result<()> {
        mentions.into_iter().try_for_each(|m| self.push(m))
    }

    pub fn len(&self) -> usize {
        self.mentions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mentions.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut order: Vec<&MentionEmbedding> = self.mentions.iter().collect();
        order.sort_by(|a, b| {
            (&a.doc_id, &a.stem, a.chunk_index, a.position).cmp(&(
                &b.doc_id,
                &b.stem,
                b.chunk_index,
                b.position,
            ))
        });
        let mut seen = HashSet::new();
        for m in &order {
            if !seen.insert((&m.doc_id, m.chunk_index, m.position)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate mention at ({:?}, chunk {}, position {})",
                    m.doc_id, m.chunk_index, m.position
                )));
            }
        }

        // (doc, stem) -> first mention, count
        let mut entries: BTreeMap<(&str, &str), (u64, u32)> = BTreeMap::new();
        for (i, m) in order.iter().enumerate() {
            entries
                .entry((m.doc_id.as_str(), m.stem.as_str()))
                .and_modify(|e| e.1 += 1)
                .or_insert((i as u64, 1));
        }
        let mut doc_ranges: BTreeMap<&str, (u32, u32)> =
            self.docs.iter().map(|d| (d.as_str(), (0, 0))).collect();
        for (i, (doc, _)) in entries.keys().enumerate() {
            let r = doc_ranges.get_mut(doc).expect("doc registered on push");
            if r.1 == 0 {
                r.0 = i as u32;
            }
            r.1 += 1;
        }

        let mut out = Vec::new();
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(doc_ranges.len() as u32).to_le_bytes());
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&(order.len() as u64).to_le_bytes());
        for (doc, (first, count)) in &doc_ranges {
            let first = if *count == 0 { 0 } else { *first };
            out.extend_from_slice(&(doc.len() as u32).to_le_bytes());
            out.extend_from_slice(doc.as_bytes());
            out.extend_from_slice(&first.to_le_bytes());
            out.extend_from_slice(&count.to_le_bytes());
        }
        for ((_, stem), (first, count)) in &entries {
            out.extend_from_slice(&(stem.len() as u32).to_le_bytes());
            out.extend_from_slice(stem.as_bytes());
            out.extend_from_slice(&first.to_le_bytes());
            out.extend_from_slice(&count.to_le_bytes());
        }
        while out.len() % 4 != 0 {
            out.push(0);
        }
        for m in &order {
            out.extend_from_slice(&m.chunk_index.to_le_bytes());
            out.extend_from_slice(&m.position.to_le_bytes());
        }
        for m in &order {
            for x in &m.vector {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::io::BufWriter::new(File::create(path)?);
        f.write_all(&bytes)?;
        f.flush()?;
        Ok(())
    }
}

enum Backing {
    Mapped(Mmap),
    Owned(Vec<u8>),
}

impl Backing {
    fn bytes(&self) -> &[u8] {
        match self {
            Backing::Mapped(m) => m,
            Backing::Owned(v) => v,
        }
    }
}

struct Entry {
    stem: String,
    first: u64,
    count: u32,
}

struct DocDir {
    id: String,
    entries: Range<usize>,
}

/// Read-only view over a mention store file.
pub struct MentionStore {
    data: Backing,
    dim: usize,
    docs: Vec<DocDir>,
    doc_lookup: HashMap<String, usize>,
    entries: Vec<Entry>,
    mention_count: u64,
    meta_offset: usize,
    vector_offset: usize,
}

impl std::fmt::Debug for MentionStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MentionStore")
            .field("dim", &self.dim)
            .field("docs", &self.docs.len())
            .field("mentions", &self.mention_count)
            .finish()
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Format(format!("mention store truncated at byte {}", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("invalid UTF-8 in mention store".into()))
    }
}

impl MentionStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        // SAFETY: the store is immutable once written; concurrent truncation
        // of the file by another process is not supported.
        let map = unsafe { Mmap::map(&file)? };
        Self::parse(Backing::Mapped(map))
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        Self::parse(Backing::Owned(bytes))
    }

    pub fn from_writer(writer: &MentionStoreWriter) -> Result<Self> {
        Self::from_bytes(writer.to_bytes()?)
    }

    fn parse(data: Backing) -> Result<Self> {
        let buf = data.bytes();
        let mut c = Cursor { buf, pos: 0 };
        if c.take(8)? != STORE_MAGIC {
            return Err(Error::Format("not a mention store (bad magic)".into()));
        }
        let version = c.u32()?;
        if version != STORE_VERSION {
            return Err(Error::Format(format!(
                "unsupported mention store version {version}"
            )));
        }
        let dim = c.u32()? as usize;
        let doc_count = c.u32()? as usize;
        let entry_count = c.u32()? as usize;
        let mention_count = c.u64()?;
        debug_assert_eq!(c.pos, HEADER_LEN);

        let mut docs = Vec::with_capacity(doc_count.min(buf.len()));
        let mut doc_lookup = HashMap::with_capacity(doc_count.min(buf.len()));
        for i in 0..doc_count {
            let id = c.string()?;
            let first = c.u32()? as usize;
            let count = c.u32()? as usize;
            if first + count > entry_count {
                return Err(Error::Format(format!(
                    "entry range of {id:?} out of bounds"
                )));
            }
            if doc_lookup.insert(id.clone(), i).is_some() {
                return Err(Error::Format(format!("document {id:?} listed twice")));
            }
            docs.push(DocDir {
                id,
                entries: first..first + count,
            });
        }
        let mut entries = Vec::with_capacity(entry_count.min(buf.len()));
        for _ in 0..entry_count {
            let stem = c.string()?;
            let first = c.u64()?;
            let count = c.u32()?;
            if first + u64::from(count) > mention_count {
                return Err(Error::Format(format!(
                    "mention range of {stem:?} out of bounds"
                )));
            }
            entries.push(Entry { stem, first, count });
        }
        let meta_offset = c.pos.div_ceil(4) * 4;
        let meta_len = mention_count as usize * 8;
        let vector_offset = meta_offset + meta_len;
        let expected = vector_offset + mention_count as usize * dim * 4;
        if buf.len() != expected {
            return Err(Error::Format(format!(
                "mention store is {} bytes, header implies {expected}",
                buf.len()
            )));
        }
        Ok(Self {
            data,
            dim,
            docs,
            doc_lookup,
            entries,
            mention_count,
            meta_offset,
            vector_offset,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn mention_count(&self) -> u64 {
        self.mention_count
    }

    pub fn contains_doc(&self, doc_id: &str) -> bool {
        self.doc_lookup.contains_key(doc_id)
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }

    fn meta(&self, i: u64) -> (u32, u32) {
        let off = self.meta_offset + i as usize * 8;
        let b = &self.data.bytes()[off..off + 8];
        (
            u32::from_le_bytes(b[..4].try_into().unwrap()),
            u32::from_le_bytes(b[4..].try_into().unwrap()),
        )
    }

    fn vector_f32(&self, i: u64) -> Vec<f32> {
        let off = self.vector_offset + i as usize * self.dim * 4;
        self.data.bytes()[off..off + self.dim * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect()
    }

    fn vector_f64(&self, i: u64) -> Vec<f64> {
        let off = self.vector_offset + i as usize * self.dim * 4;
        self.data.bytes()[off..off + self.dim * 4]
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
            .collect()
    }

    /// Per-stem mention vectors of one document.
    pub fn doc(&self, doc_id: &str) -> Result<DocMentions<'_>> {
        let &i = self
            .doc_lookup
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDocument(doc_id.to_string()))?;
        Ok(DocMentions {
            store: self,
            entries: self.docs[i].entries.clone(),
        })
    }

    /// All mentions of `stem` in `doc_id`, by (chunk, position). Empty when
    /// the document exists but never mentions the stem.
    pub fn mentions_of(&self, doc_id: &str, stem: &str) -> Result<Vec<MentionEmbedding>> {
        let view = self.doc(doc_id)?;
        let entries = &self.entries[view.entries.clone()];
        let Ok(k) = entries.binary_search_by(|e| e.stem.as_str().cmp(stem)) else {
            return Ok(Vec::new());
        };
        let e = &entries[k];
        Ok((e.first..e.first + u64::from(e.count))
            .map(|i| {
                let (chunk_index, position) = self.meta(i);
                MentionEmbedding {
                    stem: stem.to_string(),
                    doc_id: doc_id.to_string(),
                    chunk_index,
                    position,
                    vector: self.vector_f32(i),
                }
            })
            .collect())
    }

    /// Every mention in the store, in file order.
    pub fn all_mentions(&self) -> Vec<MentionEmbedding> {
        let mut out = Vec::with_capacity(self.mention_count as usize);
        for d in &self.docs {
            for e in &self.entries[d.entries.clone()] {
                for i in e.first..e.first + u64::from(e.count) {
                    let (chunk_index, position) = self.meta(i);
                    out.push(MentionEmbedding {
                        stem: e.stem.clone(),
                        doc_id: d.id.clone(),
                        chunk_index,
                        position,
                        vector: self.vector_f32(i),
                    });
                }
            }
        }
        out
    }
}

/// Mentions of a single document grouped by stem (ascending).
pub struct DocMentions<'a> {
    store: &'a MentionStore,
    entries: Range<usize>,
}

impl<'a> DocMentions<'a> {
    pub fn stems(&self) -> impl Iterator<Item = &'a str> + '_ {
        self.store.entries[self.entries.clone()]
            .iter()
            .map(|e| e.stem.as_str())
    }

    /// `(stem, vectors of its mentions)` pairs, vectors widened to f64.
    pub fn iter(&self) -> impl Iterator<Item = (&'a str, Vec<Vec<f64>>)> + '_ {
        let store = self.store;
        store.entries[self.entries.clone()].iter().map(move |e| {
            let vs = (e.first..e.first + u64::from(e.count))
                .map(|i| store.vector_f64(i))
                .collect();
            (e.stem.as_str(), vs)
        })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
