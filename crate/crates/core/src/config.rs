//! Experiment configuration (TOML). Command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{PieceModel, TestEmbedderConfig};
use crate::eval::Metric;
use crate::expansion::{ExpansionParams, FilterPolicy, Pooling, Similarity};
use crate::index::Bm25Params;
use crate::text::{Analyzer, StemmerId, Stopwords};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub static_vectors: Option<PathBuf>,
    pub query_embeddings: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub folds: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub stemmer: StemmerId,
    /// `english`, `none`, or a path to a file with one stopword per line.
    pub stopwords: String,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            stemmer: StemmerId::Krovetz,
            stopwords: "english".into(),
        }
    }
}

impl AnalysisConfig {
    pub fn analyzer(&self) -> Result<Analyzer> {
        let stopwords = match self.stopwords.as_str() {
            "english" => Stopwords::english(),
            "none" => Stopwords::none(),
            path => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read stopword file {path}: {e}")))?;
                Stopwords::from_words(text.lines().map(str::trim).filter(|l| !l.is_empty()))
            }
        };
        Ok(Analyzer::new(self.stemmer, stopwords))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k1: f64,
    pub b: f64,
    pub mu: f64,
    /// Documents returned per query.
    pub depth: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k1: 1.2,
            b: 0.75,
            mu: 1000.0,
            depth: 1000,
        }
    }
}

impl RetrievalConfig {
    pub fn bm25(&self) -> Bm25Params {
        Bm25Params {
            k1: self.k1,
            b: self.b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionConfig {
    pub fb_docs: usize,
    pub fb_terms: usize,
    pub lambda: f64,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        let p = ExpansionParams::default();
        Self {
            fb_docs: p.fb_docs,
            fb_terms: p.fb_terms,
            lambda: p.lambda,
        }
    }
}

impl ExpansionConfig {
    pub fn params(&self, pooling: Pooling) -> ExpansionParams {
        ExpansionParams {
            fb_docs: self.fb_docs,
            fb_terms: self.fb_terms,
            lambda: self.lambda,
            similarity: Similarity::CosineShifted,
            pooling,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    /// Deterministic stand-in encoder.
    Test,
    /// HTTP encoder speaking the JSON wire protocol.
    Remote,
    /// Query vectors from `paths.query_embeddings`; no encoder.
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub max_pieces: usize,
    pub dim: usize,
    pub seed: u64,
    pub radius: usize,
    pub context_weight: f64,
    pub noise_weight: f64,
    /// Characters per piece for the test encoder; 0 means one piece per word.
    pub chars_per_piece: usize,
    pub url: Option<String>,
    pub timeout_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        let t = TestEmbedderConfig::default();
        Self {
            kind: ProviderKind::Test,
            max_pieces: 128,
            dim: t.dim,
            seed: t.seed,
            radius: t.radius,
            context_weight: t.context_weight,
            noise_weight: t.noise_weight,
            chars_per_piece: 0,
            url: None,
            timeout_ms: 30_000,
        }
    }
}

impl ProviderConfig {
    pub fn test_embedder(&self) -> TestEmbedderConfig {
        TestEmbedderConfig {
            dim: self.dim,
            seed: self.seed,
            radius: self.radius,
            context_weight: self.context_weight,
            noise_weight: self.noise_weight,
            pieces: match self.chars_per_piece {
                0 => PieceModel::Single,
                n => PieceModel::Chars(n),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub folds: usize,
    pub metric: Metric,
    pub fb_docs: Vec<usize>,
    pub fb_terms: Vec<usize>,
    pub lambda: Vec<f64>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            metric: Metric::MAP,
            fb_docs: (1..=20).map(|i| i * 5).collect(),
            fb_terms: (1..=10).map(|i| i * 10).collect(),
            lambda: (2..=18).map(|i| f64::from(i) * 5.0 / 100.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub analysis: AnalysisConfig,
    pub retrieval: RetrievalConfig,
    pub expansion: ExpansionConfig,
    pub filter: FilterPolicy,
    pub provider: ProviderConfig,
    pub tune: TuneConfig,
    pub seed: u64,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.paths.resolve_against(base);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.retrieval.bm25().validate()?;
        crate::index::check_mu(self.retrieval.mu)?;
        if self.retrieval.depth == 0 {
            return Err(Error::Config("retrieval.depth must be >= 1".into()));
        }
        self.expansion.params(Pooling::Max).validate()?;
        if self.provider.max_pieces < 3 {
            return Err(Error::Config("provider.max_pieces must be >= 3".into()));
        }
        if self.provider.dim == 0 {
            return Err(Error::Config("provider.dim must be >= 1".into()));
        }
        if self.tune.folds < 2 {
            return Err(Error::Config("tune.folds must be >= 2".into()));
        }
        if self.tune.fb_docs.contains(&0) || self.tune.fb_terms.contains(&0) {
            return Err(Error::Config("tune grids must not contain 0".into()));
        }
        if self.tune.lambda.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::Config("tune.lambda values must be in [0, 1]".into()));
        }
        Ok(())
    }
}

impl Paths {
    fn resolve_against(&mut self, base: &Path) {
        for p in [
            &mut self.corpus,
            &mut self.index,
            &mut self.store,
            &mut self.static_vectors,
            &mut self.query_embeddings,
            &mut self.topics,
            &mut self.qrels,
            &mut self.folds,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::default();
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.tune.lambda.len(), 17);
    }

    #[test]
    fn partial_file() {
        let cfg = Config::from_toml(
            "seed = 7\n[retrieval]\nmu = 1500\n[expansion]\nfb_docs = 20\n[analysis]\nstemmer = \"porter2\"\n[tune]\nmetric = \"recall_1000\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.retrieval.mu, 1500.0);
        assert_eq!(cfg.retrieval.k1, 1.2);
        assert_eq!(cfg.expansion.fb_docs, 20);
        assert_eq!(cfg.analysis.stemmer, StemmerId::Porter2);
        assert_eq!(cfg.tune.metric, Metric::Recall(1000));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::from_toml("[retrieval]\nmu = 0\n").is_err());
        assert!(Config::from_toml("[expansion]\nlambda = 1.5\n").is_err());
        assert!(Config::from_toml("[retrieval]\nmu_typo = 3\n").is_err());
        assert!(Config::from_toml("[analysis]\nstemmer = \"lovins\"\n").is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.toml");
        std::fs::write(&p, "[paths]\nindex = \"idx.bin\"\nqrels = \"/abs/q.txt\"\n").unwrap();
        let cfg = Config::load(&p).unwrap();
        assert_eq!(cfg.paths.index.unwrap(), dir.path().join("idx.bin"));
        assert_eq!(cfg.paths.qrels.unwrap(), PathBuf::from("/abs/q.txt"));
    }
}
