//! Binary index file, little-endian throughout:
//!
//! ```text
//! magic        8 bytes  "CEQEIDX\0"
//! version      u32      FORMAT_VERSION
//! stemmer      u32 len + UTF-8 bytes
//! doc_count    u32
//! term_count   u32
//! docs         doc_count × { id: u32 len + UTF-8, length: u32 }        ascending id
//! terms        term_count × { stem: u32 len + UTF-8, cf: u64, df: u32,
//!                             df × { doc: u32, tf: u32 } }             ascending stem
//! ```

use std::io::Write;
use std::path::Path;

use super::{DocEntry, Index, Posting, TermEntry};
use crate::text::StemmerId;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CEQEIDX\0";
pub const FORMAT_VERSION: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("index file truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
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
            .map_err(|_| Error::Format(format!("invalid UTF-8 string before byte {}", self.pos)))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Index {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut out, self.stemmer.as_str());
        out.extend_from_slice(&(self.docs.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.terms.len() as u32).to_le_bytes());
        for d in &self.docs {
            put_str(&mut out, &d.id);
            out.extend_from_slice(&d.length.to_le_bytes());
        }
        for t in &self.terms {
            put_str(&mut out, &t.stem);
            out.extend_from_slice(&t.cf.to_le_bytes());
            out.extend_from_slice(&(t.postings.len() as u32).to_le_bytes());
            for p in &t.postings {
                out.extend_from_slice(&p.doc.to_le_bytes());
                out.extend_from_slice(&p.tf.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not an index file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported index version {version}"
            )));
        }
        let stemmer: StemmerId = r.string()?.parse()?;
        let doc_count = r.u32()? as usize;
        let term_count = r.u32()? as usize;

        let mut docs = Vec::with_capacity(doc_count.min(buf.len()));
        for _ in 0..doc_count {
            let id = r.string()?;
            let length = r.u32()?;
            if docs.last().is_some_and(|d: &DocEntry| d.id >= id) {
                return Err(Error::Format(format!(
                    "document ids out of order at {id:?}"
                )));
            }
            docs.push(DocEntry { id, length });
        }
        let mut lengths = vec![0u64; doc_count];
        let mut terms: Vec<TermEntry> = Vec::with_capacity(term_count.min(buf.len()));
        for _ in 0..term_count {
            let stem = r.string()?;
            if terms.last().is_some_and(|t| t.stem >= stem) {
                return Err(Error::Format(format!("terms out of order at {stem:?}")));
            }
            let cf = r.u64()?;
            let df = r.u32()? as usize;
            let mut postings = Vec::with_capacity(df.min(buf.len()));
            for _ in 0..df {
                let doc = r.u32()?;
                let tf = r.u32()?;
                if doc as usize >= doc_count {
                    return Err(Error::Format(format!(
                        "posting for {stem:?} references doc {doc}"
                    )));
                }
                lengths[doc as usize] += u64::from(tf);
                postings.push(Posting { doc, tf });
            }
            if postings.iter().map(|p| u64::from(p.tf)).sum::<u64>() != cf {
                return Err(Error::Format(format!(
                    "collection frequency mismatch for {stem:?}"
                )));
            }
            terms.push(TermEntry { stem, cf, postings });
        }
        if r.pos != buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                buf.len() - r.pos
            )));
        }
        if let Some((d, _)) = docs
            .iter()
            .zip(&lengths)
            .find(|(d, &l)| u64::from(d.length) != l)
        {
            return Err(Error::Format(format!(
                "length of {:?} disagrees with postings",
                d.id
            )));
        }
        Ok(Index::assemble(stemmer, docs, terms))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::text::{Analyzer, Stopwords};

    fn sample() -> Index {
        let a = Analyzer::new(StemmerId::Krovetz, Stopwords::english());
        let docs = vec![
            Document::new("d2", "The winners of the Oscars", &a),
            Document::new("d1", "academy award nominations", &a),
            Document::new("d3", "", &a),
        ];
        Index::build(&docs, StemmerId::Krovetz).unwrap()
    }

    #[test]
    fn round_trip() {
        let idx = sample();
        let bytes = idx.to_bytes();
        let back = Index::from_bytes(&bytes).unwrap();
        assert_eq!(idx, back);
        assert_eq!(bytes, back.to_bytes());
        assert_eq!(&bytes[..8], MAGIC);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        assert!(Index::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Index::from_bytes(&bad).is_err());
        let mut v2 = bytes.clone();
        v2[8] = 9;
        assert!(Index::from_bytes(&v2).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Index::from_bytes(&extra).is_err());
    }
}
