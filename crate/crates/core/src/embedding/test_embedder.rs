//! A deterministic stand-in for a transformer encoder.
//!
//! Each stem owns a fixed pseudorandom direction. A mention vector mixes the
//! direction of its own stem with the directions of the content stems around
//! it, plus a small component seeded by the exact (stem, context multiset)
//! pair, and is then L2-normalized. Words that share contexts end up close
//! together and the same word in different contexts gets different vectors,
//! which is the property the expansion models rely on.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::provider::{EmbeddingProvider, EncodedText, ProviderDescriptor, ProviderSource};
use crate::text::Analyzer;
use crate::Result;

const CLS: &str = "[CLS]";
const SEP: &str = "[SEP]";

/// How words split into pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PieceModel {
    /// Every word is one piece.
    Single,
    /// A word of `n` characters has `ceil(n / chars)` pieces.
    Chars(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestEmbedderConfig {
    pub dim: usize,
    pub seed: u64,
    /// Context stems are taken from this many positions either side.
    pub radius: usize,
    pub context_weight: f64,
    pub noise_weight: f64,
    pub pieces: PieceModel,
}

impl Default for TestEmbedderConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            seed: 0,
            radius: 5,
            context_weight: 1.0,
            noise_weight: 0.1,
            pieces: PieceModel::Single,
        }
    }
}

fn fnv1a(seed: u64, parts: &[&str]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for part in parts {
        for b in part.bytes().chain(std::iter::once(0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn gaussian(seed: u64, key: &[&str], dim: usize, out: &mut [f64], weight: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, key));
    for x in out.iter_mut().take(dim) {
        let g: f64 = StandardNormal.sample(&mut rng);
        *x += weight * g;
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Vector for `stem` seen among `context` stems under `cfg`.
pub fn deterministic_test_embedder(
    cfg: &TestEmbedderConfig,
    stem: &str,
    context: &[&str],
) -> Vec<f64> {
    let dim = cfg.dim;
    let mut v = vec![0.0; dim];
    gaussian(cfg.seed, &["w", stem], dim, &mut v, 1.0);
    if !context.is_empty() {
        let mut sorted = context.to_vec();
        sorted.sort_unstable();
        let w = cfg.context_weight / (sorted.len() as f64).sqrt();
        for c in &sorted {
            gaussian(cfg.seed, &["w", c], dim, &mut v, w);
        }
        let mut key = Vec::with_capacity(sorted.len() + 2);
        key.push("ctx");
        key.push(stem);
        key.extend(sorted);
        gaussian(cfg.seed, &key, dim, &mut v, cfg.noise_weight);
    }
    normalize(&mut v);
    v
}

/// [`EmbeddingProvider`] backed by [`deterministic_test_embedder`].
#[derive(Debug, Clone)]
pub struct TestEmbedder {
    cfg: TestEmbedderConfig,
    analyzer: Analyzer,
}

impl TestEmbedder {
    pub fn new(cfg: TestEmbedderConfig, analyzer: Analyzer) -> Self {
        Self { cfg, analyzer }
    }

    pub fn config(&self) -> &TestEmbedderConfig {
        &self.cfg
    }

    fn pieces_for(&self, word: &str) -> usize {
        match self.cfg.pieces {
            PieceModel::Single => 1,
            PieceModel::Chars(n) => word.chars().count().div_ceil(n.max(1)).max(1),
        }
    }

    fn encode_one(&self, words: &[String]) -> EncodedText {
        let tokens = self.analyzer.analyze_words(words);
        let content: Vec<&str> = tokens
            .iter()
            .filter(|t| !t.is_stopword)
            .map(|t| t.stem.as_str())
            .collect();
        let mut pieces = vec![deterministic_test_embedder(&self.cfg, CLS, &content)];
        let mut spans = Vec::with_capacity(tokens.len());
        let r = self.cfg.radius;
        for (i, tok) in tokens.iter().enumerate() {
            let lo = i.saturating_sub(r);
            let hi = (i + r + 1).min(tokens.len());
            let context: Vec<&str> = (lo..hi)
                .filter(|&j| j != i && !tokens[j].is_stopword)
                .map(|j| tokens[j].stem.as_str())
                .collect();
            let n = self.pieces_for(&tok.surface);
            let start = pieces.len();
            if n == 1 {
                pieces.push(deterministic_test_embedder(&self.cfg, &tok.stem, &context));
            } else {
                for p in 0..n {
                    let key = format!("{}##{p}", tok.stem);
                    pieces.push(deterministic_test_embedder(&self.cfg, &key, &context));
                }
            }
            spans.push((start, pieces.len()));
        }
        pieces.push(deterministic_test_embedder(&self.cfg, SEP, &content));
        EncodedText {
            pieces,
            word_spans: spans,
        }
    }
}

impl EmbeddingProvider for TestEmbedder {
    fn descriptor(&self) -> ProviderDescriptor {
        ProviderDescriptor {
            dimension: self.cfg.dim,
            source: ProviderSource::DeterministicTest,
        }
    }

    fn piece_counts(&self, words: &[String]) -> Result<Vec<usize>> {
        Ok(words.iter().map(|w| self.pieces_for(w)).collect())
    }

    fn encode(&self, texts: &[Vec<String>]) -> Result<Vec<EncodedText>> {
        Ok(texts.iter().map(|t| self.encode_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::embed_query;

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    #[test]
    fn deterministic() {
        let cfg = TestEmbedderConfig::default();
        let a = deterministic_test_embedder(&cfg, "bank", &["river", "water"]);
        let b = deterministic_test_embedder(&cfg, "bank", &["river", "water"]);
        assert_eq!(a, b);
        // multiset, not sequence
        let c = deterministic_test_embedder(&cfg, "bank", &["water", "river"]);
        assert_eq!(a, c);
    }

    #[test]
    fn context_changes_vector() {
        let cfg = TestEmbedderConfig::default();
        let a = deterministic_test_embedder(&cfg, "bank", &["river", "water"]);
        let b = deterministic_test_embedder(&cfg, "bank", &["loan", "money"]);
        assert!(cos(&a, &b) < 1.0 - 1e-6);
        let c = deterministic_test_embedder(&cfg, "bank", &["river", "river", "water", "water"]);
        assert!(cos(&a, &c) < 1.0 - 1e-9);
    }

    #[test]
    fn unit_norm() {
        let cfg = TestEmbedderConfig {
            dim: 17,
            ..Default::default()
        };
        for (stem, ctx) in [("a", vec![]), ("b", vec!["x"]), ("c", vec!["x", "y", "x"])] {
            let v = deterministic_test_embedder(&cfg, stem, &ctx);
            assert_eq!(v.len(), 17);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shared_context_means_closer() {
        let cfg = TestEmbedderConfig {
            dim: 256,
            ..Default::default()
        };
        let q = deterministic_test_embedder(&cfg, "bank", &["loan"]);
        let near = deterministic_test_embedder(&cfg, "interest", &["loan", "bank", "rate"]);
        let far = deterministic_test_embedder(&cfg, "water", &["river", "fish", "shore"]);
        assert!(cos(&q, &near) > cos(&q, &far));
    }

    #[test]
    fn query_centroid_is_mean_of_four_vectors() {
        let cfg = TestEmbedderConfig::default();
        let analyzer = Analyzer::default();
        let provider = TestEmbedder::new(cfg, analyzer.clone());
        let toks = analyzer.tokenize("oscar winner");
        let q = embed_query("q", &toks, &provider).unwrap();

        let ctx = ["oscar", "winner"];
        let cls = deterministic_test_embedder(&cfg, "[CLS]", &ctx);
        let oscar = deterministic_test_embedder(&cfg, "oscar", &["winner"]);
        let winner = deterministic_test_embedder(&cfg, "winner", &["oscar"]);
        let sep = deterministic_test_embedder(&cfg, "[SEP]", &ctx);
        for d in 0..cfg.dim {
            let expected = (cls[d] + oscar[d] + winner[d] + sep[d]) / 4.0;
            assert!((q.centroid[d] - expected).abs() < 1e-12);
        }
        assert_eq!(q.per_term["oscar"], oscar);
        assert_eq!(q.per_term["winner"], winner);
    }

    #[test]
    fn multi_piece_words() {
        let cfg = TestEmbedderConfig {
            pieces: PieceModel::Chars(3),
            ..Default::default()
        };
        let p = TestEmbedder::new(cfg, Analyzer::default());
        assert_eq!(
            p.piece_counts(&["abcdefg".into(), "ab".into()]).unwrap(),
            vec![3, 1]
        );
        let enc = p
            .encode(&[vec!["abcdefg".into(), "ab".into()]])
            .unwrap()
            .remove(0);
        assert_eq!(enc.word_spans, vec![(1, 4), (4, 5)]);
        assert_eq!(enc.pieces.len(), 6);
        enc.validate(2, cfg.dim).unwrap();
    }
}
