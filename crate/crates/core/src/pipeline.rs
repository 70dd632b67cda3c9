//! End-to-end retrieval: first-pass BM25, feedback, expansion and weighted
//! query-likelihood re-retrieval.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Config, ExpansionConfig, ProviderConfig, ProviderKind, RetrievalConfig};
use crate::embedding::{
    embed_query, load_query_embeddings, EmbeddingProvider, MentionStore, QueryEmbedding,
    RemoteConfig, RemoteProvider, TestEmbedder,
};
use crate::eval::{relevant_count, FeedbackPoint, Metric, PointScores, Qrels, Topic};
use crate::expansion::{
    ceqe_weights, compute_posteriors, execute_expanded, interpolate, rm_weights, select_top,
    static_embed_weights, FeedbackSet, FilterPolicy, Pooling, StaticVectors, TermDistribution,
    TermWeights, VocabScope,
};
use crate::index::{bm25_search, Index, Ranking};
use crate::text::{content_stems, Analyzer, Token};
use crate::{Error, Result, Warnings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bm25,
    Rm3,
    Static,
    StaticPrf,
    CeqeCentroid,
    CeqeMax,
    CeqeMul,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Bm25,
        Method::Rm3,
        Method::Static,
        Method::StaticPrf,
        Method::CeqeCentroid,
        Method::CeqeMax,
        Method::CeqeMul,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bm25 => "bm25",
            Method::Rm3 => "rm3",
            Method::Static => "static",
            Method::StaticPrf => "static-prf",
            Method::CeqeCentroid => "ceqe-centroid",
            Method::CeqeMax => "ceqe-max",
            Method::CeqeMul => "ceqe-mul",
        }
    }

    pub fn pooling(self) -> Option<Pooling> {
        match self {
            Method::CeqeCentroid => Some(Pooling::Centroid),
            Method::CeqeMax => Some(Pooling::Max),
            Method::CeqeMul => Some(Pooling::Prod),
            _ => None,
        }
    }

    pub fn expands(self) -> bool {
        self != Method::Bm25
    }

    fn uses_feedback(self) -> bool {
        !matches!(self, Method::Bm25 | Method::Static)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
                Error::Config(format!(
                    "unknown method {s:?} (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

/// Source of contextual query vectors.
#[derive(Clone, Copy)]
pub enum QueryVectors<'a> {
    Provider(&'a dyn EmbeddingProvider),
    Precomputed(&'a HashMap<String, QueryEmbedding>),
}

/// Assets a run may draw on. Only the index and analyzer are always needed.
#[derive(Clone, Copy)]
pub struct Resources<'a> {
    pub index: &'a Index,
    pub analyzer: &'a Analyzer,
    pub store: Option<&'a MentionStore>,
    pub static_vectors: Option<&'a StaticVectors>,
    pub query_vectors: Option<QueryVectors<'a>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Settings {
    pub retrieval: RetrievalConfig,
    pub expansion: ExpansionConfig,
    pub filter: FilterPolicy,
}

/// `method-xxxxxxxx`, the suffix being the first 8 hex digits of a SHA-256
/// over the method and settings.
impl From<&Config> for Settings {
    fn from(cfg: &Config) -> Self {
        Self {
            retrieval: cfg.retrieval,
            expansion: cfg.expansion,
            filter: cfg.filter,
        }
    }
}

pub fn run_tag(method: Method, settings: &Settings) -> String {
    let payload = serde_json::to_string(&(method, settings)).expect("settings serialize");
    let digest = Sha256::digest(payload.as_bytes());
    let hex: String = digest.iter().take(4).map(|b| format!("{b:02x}")).collect();
    format!("{method}-{hex}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub ranking: Ranking,
    /// Expansion distribution before interpolation.
    pub expansion: Option<TermDistribution>,
    /// Interpolated model that produced `ranking`.
    pub model: Option<TermDistribution>,
    pub warnings: Warnings,
}

pub struct Engine<'a> {
    res: Resources<'a>,
    settings: Settings,
}

impl<'a> Engine<'a> {
    pub fn new(res: Resources<'a>, settings: Settings) -> Result<Self> {
        settings.retrieval.bm25().validate()?;
        crate::index::check_mu(settings.retrieval.mu)?;
        settings.expansion.params(Pooling::Max).validate()?;
        Ok(Self { res, settings })
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    /// Fails with an actionable message when `method` lacks an asset.
    pub fn check_assets(&self, method: Method) -> Result<()> {
        if method.pooling().is_some() {
            if self.res.store.is_none() {
                return Err(Error::Config(format!(
                    "method {method} needs a mention store: build one with `ceqe build-store` \
                     (or an external extractor fed by `ceqe extract-plan`) and set paths.store"
                )));
            }
            if self.res.query_vectors.is_none() {
                return Err(Error::Config(format!(
                    "method {method} needs query vectors: configure a provider or paths.query_embeddings"
                )));
            }
        }
        if matches!(method, Method::Static | Method::StaticPrf) && self.res.static_vectors.is_none()
        {
            return Err(Error::Config(format!(
                "method {method} needs a static vector table (paths.static_vectors)"
            )));
        }
        Ok(())
    }

    pub fn tokens(&self, topic: &Topic) -> Vec<Token> {
        self.res.analyzer.tokenize(&topic.text)
    }

    fn query_embedding(&self, query_id: &str, tokens: &[Token]) -> Result<QueryEmbedding> {
        let q = match self.res.query_vectors {
            Some(QueryVectors::Provider(p)) => embed_query(query_id, tokens, p)?,
            Some(QueryVectors::Precomputed(map)) => {
                map.get(query_id).cloned().ok_or_else(|| {
                    Error::Config(format!("no precomputed embedding for query {query_id:?}"))
                })?
            }
            None => return Err(Error::Config("no query vector source configured".into())),
        };
        Ok(q)
    }

    fn feedback(
        &self,
        query_id: &str,
        tokens: &[Token],
        fb_docs: usize,
    ) -> Result<(FeedbackSet, Warnings)> {
        let first = bm25_search(
            self.res.index,
            query_id,
            tokens,
            fb_docs,
            self.settings.retrieval.bm25(),
        )?;
        compute_posteriors(
            &first,
            tokens,
            fb_docs,
            self.res.index,
            self.settings.retrieval.mu,
        )
    }

    /// Unnormalized expansion mass over all admissible candidates.
    pub fn expansion_weights(
        &self,
        method: Method,
        query_id: &str,
        tokens: &[Token],
        fb_docs: usize,
    ) -> Result<(TermWeights, Warnings)> {
        self.check_assets(method)?;
        let stopwords = self.res.analyzer.stopwords();
        let filter = &self.settings.filter;
        let index = self.res.index;
        let (feedback, mut warnings) = if method.uses_feedback() {
            let (f, w) = self.feedback(query_id, tokens, fb_docs)?;
            (Some(f), w)
        } else {
            (None, Warnings::new())
        };
        let weights = match method {
            Method::Bm25 => {
                return Err(Error::InvalidArgument(
                    "bm25 does not expand queries".into(),
                ))
            }
            Method::Rm3 => rm_weights(feedback.as_ref().unwrap(), index, filter, stopwords)?,
            Method::Static | Method::StaticPrf => {
                let scope = match &feedback {
                    Some(f) => VocabScope::Prf(index, f),
                    None => VocabScope::Global(index),
                };
                let table = self.res.static_vectors.unwrap();
                let (w, more) =
                    static_embed_weights(query_id, tokens, table, scope, filter, stopwords)?;
                warnings.extend(more);
                w
            }
            Method::CeqeCentroid | Method::CeqeMax | Method::CeqeMul => {
                let q = self.query_embedding(query_id, tokens)?;
                let store = self.res.store.unwrap();
                let pooling = method.pooling().unwrap();
                let (w, more) = ceqe_weights(
                    feedback.as_ref().unwrap(),
                    store,
                    &q,
                    pooling,
                    filter,
                    stopwords,
                )?;
                warnings.extend(more);
                w
            }
        };
        Ok((weights, warnings))
    }

    /// Expansion distribution of one query.
    pub fn expand(&self, method: Method, topic: &Topic) -> Result<(TermDistribution, Warnings)> {
        let tokens = self.tokens(topic);
        let e = &self.settings.expansion;
        let (w, warnings) = self.expansion_weights(method, &topic.id, &tokens, e.fb_docs)?;
        Ok((select_top(&topic.id, &w, e.fb_terms)?, warnings))
    }

    /// Ranks documents for one query.
    pub fn run_query(&self, method: Method, topic: &Topic) -> Result<QueryResult> {
        let tokens = self.tokens(topic);
        let r = &self.settings.retrieval;
        let mut warnings = Warnings::new();
        if content_stems(&tokens).next().is_none() {
            warnings.push(format!(
                "query {:?} has no content terms; empty ranking",
                topic.id
            ));
            return Ok(QueryResult {
                ranking: Ranking::new(&topic.id),
                expansion: None,
                model: None,
                warnings,
            });
        }
        if !method.expands() {
            let ranking = bm25_search(self.res.index, &topic.id, &tokens, r.depth, r.bm25())?;
            return Ok(QueryResult {
                ranking,
                expansion: None,
                model: None,
                warnings,
            });
        }
        let e = &self.settings.expansion;
        let expansion = match self.expansion_weights(method, &topic.id, &tokens, e.fb_docs) {
            Ok((w, more)) => {
                warnings.extend(more);
                match select_top(&topic.id, &w, e.fb_terms) {
                    Ok(d) => Some(d),
                    Err(Error::NoCandidates(msg)) => {
                        warnings.push(format!("{msg}; using the unexpanded query"));
                        None
                    }
                    Err(err) => return Err(err),
                }
            }
            Err(Error::NoCandidates(msg) | Error::Empty(msg)) => {
                warnings.push(format!("{msg}; using the unexpanded query"));
                None
            }
            Err(err) => return Err(err),
        };
        let model = match &expansion {
            Some(exp) => interpolate(&tokens, exp, e.lambda)?,
            None => TermDistribution::query_mle(&topic.id, &tokens)?,
        };
        let ranking = execute_expanded(self.res.index, &model, r.mu, r.depth)?;
        Ok(QueryResult {
            ranking,
            expansion,
            model: Some(model),
            warnings,
        })
    }

    /// Rankings for every topic, in topic order.
    pub fn run(&self, method: Method, topics: &[Topic]) -> Result<(Vec<Ranking>, Warnings)> {
        self.check_assets(method)?;
        let results: Vec<QueryResult> = topics
            .par_iter()
            .map(|t| self.run_query(method, t))
            .collect::<Result<_>>()?;
        let mut warnings = Warnings::new();
        let mut rankings = Vec::with_capacity(results.len());
        for r in results {
            warnings.extend(r.warnings);
            rankings.push(r.ranking);
        }
        Ok((rankings, warnings))
    }

    /// Metric values of every evaluable topic at every grid point. Feedback
    /// and expansion mass are computed once per (topic, fb_docs).
    pub fn sweep(
        &self,
        method: Method,
        topics: &[Topic],
        grid: &[FeedbackPoint],
        qrels: &Qrels,
        metrics: &[Metric],
    ) -> Result<Vec<PointScores>> {
        if !method.expands() {
            return Err(Error::InvalidArgument(
                "bm25 has no expansion parameters to sweep".into(),
            ));
        }
        self.check_assets(method)?;
        let mu = self.settings.retrieval.mu;
        let depth = self.settings.retrieval.depth;
        let per_topic: Vec<Option<(String, Vec<Vec<f64>>)>> = topics
            .par_iter()
            .map(|topic| {
                let Some(judged) = qrels.get(&topic.id).filter(|j| relevant_count(j) > 0) else {
                    return Ok(None);
                };
                let tokens = self.tokens(topic);
                let mut weights: BTreeMap<usize, Option<TermWeights>> = BTreeMap::new();
                let mut values = Vec::with_capacity(grid.len());
                for p in grid {
                    let key = if method.uses_feedback() { p.fb_docs } else { 0 };
                    if !weights.contains_key(&key) {
                        let w = match self.expansion_weights(method, &topic.id, &tokens, p.fb_docs)
                        {
                            Ok((w, _)) => Some(w),
                            Err(Error::NoCandidates(_) | Error::Empty(_)) => None,
                            Err(e) => return Err(e),
                        };
                        weights.insert(key, w);
                    }
                    let model = match weights[&key]
                        .as_ref()
                        .map(|w| select_top(&topic.id, w, p.fb_terms))
                    {
                        Some(Ok(exp)) => interpolate(&tokens, &exp, p.lambda)?,
                        Some(Err(Error::NoCandidates(_))) | None => {
                            TermDistribution::query_mle(&topic.id, &tokens)?
                        }
                        Some(Err(e)) => return Err(e),
                    };
                    let ranking = execute_expanded(self.res.index, &model, mu, depth)?;
                    let ids: Vec<&str> = ranking.doc_ids().collect();
                    values.push(
                        metrics
                            .iter()
                            .map(|m| m.compute(&ids, judged).unwrap_or(0.0))
                            .collect(),
                    );
                }
                Ok(Some((topic.id.clone(), values)))
            })
            .collect::<Result<_>>()?;
        let mut out = vec![PointScores::new(); grid.len()];
        for (qid, values) in per_topic.into_iter().flatten() {
            for (slot, v) in out.iter_mut().zip(values) {
                slot.insert(qid.clone(), v);
            }
        }
        Ok(out)
    }
}

/// Builds the encoder selected by `cfg`; `precomputed` has none.
pub fn make_provider(
    cfg: &ProviderConfig,
    analyzer: &Analyzer,
) -> Result<Box<dyn EmbeddingProvider>> {
    match cfg.kind {
        ProviderKind::Test => Ok(Box::new(TestEmbedder::new(
            cfg.test_embedder(),
            analyzer.clone(),
        ))),
        ProviderKind::Remote => {
            let url = cfg
                .url
                .clone()
                .ok_or_else(|| Error::Config("remote provider needs provider.url".into()))?;
            Ok(Box::new(RemoteProvider::new(RemoteConfig {
                url,
                dimension: cfg.dim,
                timeout_ms: cfg.timeout_ms,
            })))
        }
        ProviderKind::Precomputed => Err(Error::Config(
            "an encoder is needed here; set provider.kind to test or remote".into(),
        )),
    }
}

/// Owned inputs of an [`Engine`], loaded from a [`Config`].
pub struct Assets {
    pub index: Index,
    pub analyzer: Analyzer,
    pub store: Option<MentionStore>,
    pub static_vectors: Option<StaticVectors>,
    pub provider: Option<Box<dyn EmbeddingProvider>>,
    pub query_embeddings: Option<HashMap<String, QueryEmbedding>>,
}

impl Assets {
    /// Loads the index plus whatever `methods` need. Assets whose paths are
    /// unset stay `None`; [`Engine::check_assets`] reports them per method.
    pub fn load(cfg: &Config, methods: &[Method]) -> Result<Self> {
        let analyzer = cfg.analysis.analyzer()?;
        let path = cfg
            .paths
            .index
            .as_deref()
            .ok_or_else(|| Error::Config("no index path (paths.index)".into()))?;
        let index = Index::load(path).map_err(Error::at(path))?;
        if index.stemmer() != cfg.analysis.stemmer {
            return Err(Error::at(path)(Error::Config(format!(
                "index was built with stemmer {:?} but the config selects {:?}",
                index.stemmer(),
                cfg.analysis.stemmer
            ))));
        }
        let mut assets = Assets {
            index,
            analyzer,
            store: None,
            static_vectors: None,
            provider: None,
            query_embeddings: None,
        };
        if methods.iter().any(|m| m.pooling().is_some()) {
            if let Some(path) = &cfg.paths.store {
                assets.store = Some(MentionStore::open(path).map_err(Error::at(path))?);
            }
            if cfg.provider.kind == ProviderKind::Precomputed {
                if let Some(path) = &cfg.paths.query_embeddings {
                    let file = std::fs::File::open(path).map_err(|e| Error::at(path)(e.into()))?;
                    let map = load_query_embeddings(std::io::BufReader::new(file))
                        .map_err(Error::at(path))?;
                    assets.query_embeddings = Some(map);
                }
            } else {
                assets.provider = Some(make_provider(&cfg.provider, &assets.analyzer)?);
            }
        }
        if methods
            .iter()
            .any(|m| matches!(m, Method::Static | Method::StaticPrf))
        {
            if let Some(path) = &cfg.paths.static_vectors {
                let file = std::fs::File::open(path).map_err(|e| Error::at(path)(e.into()))?;
                let table =
                    StaticVectors::from_text(std::io::BufReader::new(file), &assets.analyzer)
                        .map_err(Error::at(path))?;
                assets.static_vectors = Some(table);
            }
        }
        Ok(assets)
    }

    pub fn resources(&self) -> Resources<'_> {
        let query_vectors = match (&self.provider, &self.query_embeddings) {
            (Some(p), _) => Some(QueryVectors::Provider(p.as_ref())),
            (None, Some(m)) => Some(QueryVectors::Precomputed(m)),
            (None, None) => None,
        };
        Resources {
            index: &self.index,
            analyzer: &self.analyzer,
            store: self.store.as_ref(),
            static_vectors: self.static_vectors.as_ref(),
            query_vectors,
        }
    }

    pub fn engine(&self, settings: Settings) -> Result<Engine<'_>> {
        Engine::new(self.resources(), settings)
    }
}
