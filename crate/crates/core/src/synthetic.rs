//! Seeded synthetic collections for tests and experiments.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::eval::{Qrels, Topic};
use crate::text::{Analyzer, Stopwords};

/// Documents, topics and judgments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SyntheticCollection {
    /// `(doc_id, text)`, ascending by id.
    pub docs: Vec<(String, String)>,
    pub topics: Vec<Topic>,
    pub qrels: Qrels,
}

impl SyntheticCollection {
    pub fn documents(&self, analyzer: &Analyzer) -> Vec<Document> {
        self.docs
            .iter()
            .map(|(id, text)| Document::new(id.clone(), text.clone(), analyzer))
            .collect()
    }

    /// JSONL corpus text (`{"id": …, "contents": …}` per line).
    pub fn to_jsonl(&self) -> String {
        self.docs
            .iter()
            .map(|(id, text)| serde_json::json!({ "id": id, "contents": text }).to_string() + "\n")
            .collect()
    }

    pub fn topics_tsv(&self) -> String {
        self.topics
            .iter()
            .map(|t| format!("{}\t{}\n", t.id, t.text))
            .collect()
    }
}

/// Draws `n` distinct pronounceable lowercase pseudo-words that are not
/// English stopwords.
pub fn pseudo_words(rng: &mut impl Rng, n: usize, syllables: usize) -> Vec<String> {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let stop = Stopwords::english();
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w: String = (0..syllables)
            .flat_map(|_| {
                [
                    *C.choose(rng).unwrap() as char,
                    *V.choose(rng).unwrap() as char,
                ]
            })
            .collect();
        if !stop.contains(&w) && seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomCorpusSpec {
    pub max_docs: usize,
    pub max_len: usize,
    pub vocab: usize,
    pub queries: usize,
}

impl Default for RandomCorpusSpec {
    fn default() -> Self {
        Self {
            max_docs: 20,
            max_len: 50,
            vocab: 30,
            queries: 3,
        }
    }
}

/// Small corpus with Zipf-skewed word frequencies and 1–3 word queries
/// drawn from the same vocabulary. No judgments.
pub fn random_corpus(seed: u64, spec: &RandomCorpusSpec) -> SyntheticCollection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = pseudo_words(&mut rng, spec.vocab, 2);
    let weights: Vec<f64> = (1..=vocab.len()).map(|r| 1.0 / r as f64).collect();
    let total: f64 = weights.iter().sum();
    let draw = |rng: &mut ChaCha8Rng| {
        let mut x = rng.random::<f64>() * total;
        for (w, p) in vocab.iter().zip(&weights) {
            if x < *p {
                return w.clone();
            }
            x -= p;
        }
        vocab.last().unwrap().clone()
    };
    let n_docs = rng.random_range(2..=spec.max_docs.max(2));
    let docs = (0..n_docs)
        .map(|i| {
            let len = rng.random_range(1..=spec.max_len.max(1));
            let words: Vec<String> = (0..len).map(|_| draw(&mut rng)).collect();
            (format!("d{i:03}"), words.join(" "))
        })
        .collect();
    let topics = (0..spec.queries)
        .map(|i| {
            let len = rng.random_range(1..=3);
            let words: Vec<String> = (0..len).map(|_| draw(&mut rng)).collect();
            Topic {
                id: format!("q{i}"),
                text: words.join(" "),
            }
        })
        .collect();
    SyntheticCollection {
        docs,
        topics,
        qrels: Qrels::new(),
    }
}

/// Parameters of the polysemy collection.
///
/// Each topic owns a vocabulary and an ambiguous word. The ambiguous word
/// also names an unrelated "other sense" with its own vocabulary, and that
/// other sense is the more frequent one in the corpus. Topic queries pair
/// the ambiguous word with a rarer disambiguating word.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolysemySpec {
    pub topics: usize,
    pub topic_vocab: usize,
    pub sense_vocab: usize,
    pub fillers: usize,
    /// Relevant documents containing the ambiguous word.
    pub anchored_relevant: usize,
    /// Relevant documents using only topic vocabulary.
    pub unanchored_relevant: usize,
    /// Other-sense documents containing the ambiguous word.
    pub anchored_other: usize,
    /// Other-sense documents without it.
    pub unanchored_other: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Fraction of non-anchor tokens drawn from the topical vocabulary (the rest are fillers).
    pub topical_share: f64,
}

impl Default for PolysemySpec {
    fn default() -> Self {
        Self {
            topics: 8,
            topic_vocab: 12,
            sense_vocab: 12,
            fillers: 40,
            anchored_relevant: 6,
            unanchored_relevant: 40,
            anchored_other: 40,
            unanchored_other: 60,
            min_len: 30,
            max_len: 45,
            topical_share: 0.25,
        }
    }
}

fn compose(
    rng: &mut ChaCha8Rng,
    spec: &PolysemySpec,
    anchors: &[&str],
    topical: &[String],
    fillers: &[String],
) -> String {
    let len = rng.random_range(spec.min_len..=spec.max_len);
    let mut words: Vec<&str> = anchors.to_vec();
    while words.len() < len {
        let pool = if rng.random::<f64>() < spec.topical_share {
            topical
        } else {
            fillers
        };
        words.push(pool.choose(rng).unwrap());
    }
    words.shuffle(rng);
    words.join(" ")
}

pub fn polysemy_collection(seed: u64, spec: &PolysemySpec) -> SyntheticCollection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_topic = 2 + spec.topic_vocab + spec.sense_vocab;
    let words = pseudo_words(&mut rng, spec.topics * per_topic + spec.fillers, 3);
    let (topic_words, fillers) = words.split_at(spec.topics * per_topic);

    let mut docs: Vec<(String, String)> = Vec::new();
    let mut topics = Vec::new();
    let mut qrels = Qrels::new();
    for t in 0..spec.topics {
        let w = &topic_words[t * per_topic..(t + 1) * per_topic];
        let (ambiguous, cue) = (w[0].as_str(), w[1].as_str());
        let topical = &w[2..2 + spec.topic_vocab];
        let other = &w[2 + spec.topic_vocab..];
        let qid = format!("t{t:02}");
        topics.push(Topic {
            id: qid.clone(),
            text: format!("{ambiguous} {cue}"),
        });
        let judged = qrels.entry(qid).or_default();

        let mut add = |kind: &str, i: usize, text: String, relevant: bool| {
            let id = format!("t{t:02}-{kind}{i:03}");
            judged.insert(id.clone(), u32::from(relevant));
            docs.push((id, text));
        };
        for i in 0..spec.anchored_relevant {
            // half of the anchored relevant documents also carry the cue
            let anchors: &[&str] = if i % 2 == 0 {
                &[ambiguous, ambiguous, cue]
            } else {
                &[ambiguous, ambiguous]
            };
            add(
                "ra",
                i,
                compose(&mut rng, spec, anchors, topical, fillers),
                true,
            );
        }
        for i in 0..spec.unanchored_relevant {
            add(
                "ru",
                i,
                compose(&mut rng, spec, &[], topical, fillers),
                true,
            );
        }
        for i in 0..spec.anchored_other {
            add(
                "oa",
                i,
                compose(&mut rng, spec, &[ambiguous, ambiguous], other, fillers),
                false,
            );
        }
        for i in 0..spec.unanchored_other {
            add("ou", i, compose(&mut rng, spec, &[], other, fillers), false);
        }
    }
    docs.sort();
    SyntheticCollection {
        docs,
        topics,
        qrels,
    }
}

/// A collection where each query has exactly `planted` expansion terms that
/// each reach one relevant document the query alone misses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCollection {
    pub collection: SyntheticCollection,
    /// query id → planted (positive) terms.
    pub planted: BTreeMap<String, Vec<String>>,
    /// query id → terms whose addition changes nothing.
    pub inert: BTreeMap<String, Vec<String>>,
}

/// Per query: `matched` relevant documents containing the query word (each
/// also carrying one inert "companion" term), one relevant document per
/// planted term without the query word, and `distractors` non-relevant
/// documents each carrying one inert term. Planted documents hold nothing
/// but their term and stopwords, so no other word can reach them; every
/// other word is unique to its document.
pub fn planted_collection(
    seed: u64,
    queries: usize,
    planted: usize,
    matched: usize,
    distractors: usize,
) -> PlantedCollection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_query = 1 + planted + matched + distractors;
    let per_doc_unique = 3;
    let n_docs = queries * (matched + distractors);
    let words = pseudo_words(&mut rng, queries * per_query + n_docs * per_doc_unique, 3);
    let (named, unique) = words.split_at(queries * per_query);
    let mut unique = unique.chunks(per_doc_unique);

    let mut out = PlantedCollection {
        collection: SyntheticCollection::default(),
        planted: BTreeMap::new(),
        inert: BTreeMap::new(),
    };
    for q in 0..queries {
        let w = &named[q * per_query..(q + 1) * per_query];
        let qword = &w[0];
        let planted_terms = &w[1..1 + planted];
        let companions = &w[1 + planted..1 + planted + matched];
        let decoys = &w[1 + planted + matched..];
        let qid = format!("q{q:02}");
        let c = &mut out.collection;
        c.topics.push(Topic {
            id: qid.clone(),
            text: qword.clone(),
        });
        let judged = c.qrels.entry(qid.clone()).or_default();
        let mut doc = |kind: &str, i: usize, term: &str, extra: Option<&str>, relevant: bool| {
            let mut text: Vec<&str> = if kind == "p" {
                vec!["the", "of", "and"]
            } else {
                unique.next().unwrap().iter().map(String::as_str).collect()
            };
            text.push(term);
            text.extend(extra);
            let id = format!("{qid}-{kind}{i}");
            judged.insert(id.clone(), u32::from(relevant));
            c.docs.push((id, text.join(" ")));
        };
        for (i, comp) in companions.iter().enumerate() {
            doc("m", i, qword, Some(comp), true);
        }
        for (i, p) in planted_terms.iter().enumerate() {
            doc("p", i, p, None, true);
        }
        for (i, d) in decoys.iter().enumerate() {
            doc("n", i, d, None, false);
        }
        out.planted.insert(qid.clone(), planted_terms.to_vec());
        out.inert
            .insert(qid, companions.iter().chain(decoys).cloned().collect());
    }
    out.collection.docs.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded() {
        let spec = RandomCorpusSpec::default();
        assert_eq!(random_corpus(5, &spec), random_corpus(5, &spec));
        assert_ne!(random_corpus(5, &spec), random_corpus(6, &spec));
        let p = PolysemySpec::default();
        assert_eq!(polysemy_collection(1, &p), polysemy_collection(1, &p));
    }

    #[test]
    fn random_corpus_respects_bounds() {
        for seed in 0..50 {
            let c = random_corpus(seed, &RandomCorpusSpec::default());
            assert!(c.docs.len() <= 20);
            let vocab: BTreeSet<&str> = c.docs.iter().flat_map(|(_, t)| t.split(' ')).collect();
            assert!(vocab.len() <= 30);
            assert!(c.docs.iter().all(|(_, t)| t.split(' ').count() <= 50));
        }
    }

    #[test]
    fn polysemy_shape() {
        let spec = PolysemySpec::default();
        let c = polysemy_collection(3, &spec);
        let per_topic = spec.anchored_relevant
            + spec.unanchored_relevant
            + spec.anchored_other
            + spec.unanchored_other;
        assert_eq!(c.docs.len(), spec.topics * per_topic);
        let rel = crate::eval::relevant_count(&c.qrels["t00"]);
        assert_eq!(rel, spec.anchored_relevant + spec.unanchored_relevant);
    }

    #[test]
    fn planted_shape() {
        let p = planted_collection(0, 2, 3, 4, 5);
        assert_eq!(p.collection.docs.len(), 2 * (3 + 4 + 5));
        assert_eq!(p.planted["q01"].len(), 3);
        assert_eq!(p.inert["q00"].len(), 9);
    }
}
