//! Tokenization, stopword flagging and stemming.

mod krovetz;
mod stopwords;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use stopwords::Stopwords;

/// One word occurrence in a token stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub stem: String,
    pub position: u32,
    pub is_stopword: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StemmerId {
    /// Inflectional stemmer (see the `krovetz` module docs for divergences).
    Krovetz,
    /// Snowball English.
    Porter2,
    None,
}

impl StemmerId {
    pub fn as_str(self) -> &'static str {
        match self {
            StemmerId::Krovetz => "krovetz",
            StemmerId::Porter2 => "porter2",
            StemmerId::None => "none",
        }
    }
}

impl fmt::Display for StemmerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StemmerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "krovetz" | "kstem" => Ok(StemmerId::Krovetz),
            "porter2" | "porter" | "snowball" => Ok(StemmerId::Porter2),
            "none" => Ok(StemmerId::None),
            other => Err(Error::Config(format!(
                "unknown stemmer {other:?} (expected krovetz, porter2 or none)"
            ))),
        }
    }
}

enum StemmerImpl {
    Krovetz,
    Porter2(rust_stemmers::Stemmer),
    None,
}

impl StemmerImpl {
    fn new(id: StemmerId) -> Self {
        match id {
            StemmerId::Krovetz => StemmerImpl::Krovetz,
            StemmerId::Porter2 => StemmerImpl::Porter2(rust_stemmers::Stemmer::create(
                rust_stemmers::Algorithm::English,
            )),
            StemmerId::None => StemmerImpl::None,
        }
    }

    fn stem(&self, word: &str) -> String {
        let s = match self {
            StemmerImpl::Krovetz => krovetz::stem(word),
            StemmerImpl::Porter2(s) => s.stem(word).into_owned(),
            StemmerImpl::None => word.to_string(),
        };
        if s.is_empty() {
            word.to_string()
        } else {
            s
        }
    }
}

/// Tokenizer, stopword list and stemmer bundled together.
///
/// Cheap to clone; the stopword set and stemmer are shared.
#[derive(Clone)]
pub struct Analyzer {
    stemmer_id: StemmerId,
    stemmer: Arc<StemmerImpl>,
    stopwords: Arc<Stopwords>,
}

impl fmt::Debug for Analyzer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Analyzer")
            .field("stemmer", &self.stemmer_id)
            .field("stopwords", &self.stopwords.len())
            .finish()
    }
}

impl Default for Analyzer {
    fn default() -> Self {
        Self::new(StemmerId::Krovetz, Stopwords::english())
    }
}

impl Analyzer {
    pub fn new(stemmer: StemmerId, stopwords: Stopwords) -> Self {
        Self {
            stemmer_id: stemmer,
            stemmer: Arc::new(StemmerImpl::new(stemmer)),
            stopwords: Arc::new(stopwords),
        }
    }

    /// Builds an analyzer from a textual stemmer id, failing on unknown ids.
    pub fn from_ids(stemmer: &str, stopwords: Stopwords) -> Result<Self> {
        Ok(Self::new(stemmer.parse()?, stopwords))
    }

    pub fn stemmer_id(&self) -> StemmerId {
        self.stemmer_id
    }

    pub fn stopwords(&self) -> &Stopwords {
        &self.stopwords
    }

    pub fn stem(&self, word: &str) -> String {
        self.stemmer.stem(word)
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    /// Lowercases, splits on non-alphanumeric characters, flags stopwords and
    /// stems every token. Stopwords stay in the stream so positions line up
    /// with the embedding extractor.
    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        split_words(text)
            .enumerate()
            .map(|(i, surface)| {
                let stem = self.stem(&surface);
                Token {
                    is_stopword: self.stopwords.contains(&surface),
                    stem,
                    surface,
                    position: i as u32,
                }
            })
            .collect()
    }

    /// Re-analyzes already split, lowercased words, keeping their order.
    pub fn analyze_words<S: AsRef<str>>(&self, words: &[S]) -> Vec<Token> {
        words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let surface = w.as_ref().to_lowercase();
                Token {
                    is_stopword: self.stopwords.contains(&surface),
                    stem: self.stem(&surface),
                    surface,
                    position: i as u32,
                }
            })
            .collect()
    }
}

/// Lowercased maximal alphanumeric runs.
pub fn split_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Free-function form of [`Analyzer::tokenize`] keyed by stemmer id.
pub fn tokenize(text: &str, stopwords: &Stopwords, stemmer_id: &str) -> Result<Vec<Token>> {
    let analyzer = Analyzer::from_ids(stemmer_id, stopwords.clone())?;
    Ok(analyzer.tokenize(text))
}

/// Non-stopword stems of a token stream, in order.
pub fn content_stems(tokens: &[Token]) -> impl Iterator<Item = &str> {
    tokens
        .iter()
        .filter(|t| !t.is_stopword)
        .map(|t| t.stem.as_str())
}
