//! C ABI over the `ceqe` engine.
//!
//! Every fallible function returns a [`CeqeStatus`] and writes its result
//! through an out-pointer. On failure, [`ceqe_last_error`] describes the most
//! recent error on the calling thread. Objects are opaque handles released
//! with their matching `*_free` function; strings returned as `char *` are
//! released with [`ceqe_string_free`]. Handles may be shared between threads
//! for calls that take them by `const` pointer.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ceqe::config::Config;
use ceqe::corpus::{detect_format, ingest_jsonl, ingest_trec_sgml, CorpusFormat};
use ceqe::embedding::MentionStore;
use ceqe::eval::{evaluate, parse_qrels, parse_run, Metric, Topic};
use ceqe::index::{bm25_search, Bm25Params, Index, Ranking};
use ceqe::pipeline::{Assets, Method, Settings};
use ceqe::text::{Analyzer, StemmerId, Stopwords};
use ceqe::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeqeStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    InvalidArgument = 6,
    UnknownDocument = 7,
    Format = 8,
    Provider = 9,
    NoCandidates = 10,
    Eval = 11,
    Panic = 12,
}

struct Failure {
    status: CeqeStatus,
    message: String,
}

impl Failure {
    fn new(status: CeqeStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.root() {
            Error::Io(_) => CeqeStatus::Io,
            Error::Parse { .. } => CeqeStatus::Parse,
            Error::Config(_) => CeqeStatus::Config,
            Error::UnknownDocument(_) => CeqeStatus::UnknownDocument,
            Error::Format(_) | Error::Dimension { .. } => CeqeStatus::Format,
            Error::Provider(_) => CeqeStatus::Provider,
            Error::NoCandidates(_) => CeqeStatus::NoCandidates,
            Error::Eval(_) => CeqeStatus::Eval,
            _ => CeqeStatus::InvalidArgument,
        };
        Self::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', "\\0")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CeqeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CeqeStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            CeqeStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(
            CeqeStatus::NullArgument,
            format!("{what} is null"),
        ));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(CeqeStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(CeqeStatus::NullArgument, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(
            CeqeStatus::NullArgument,
            "output pointer is null",
        ));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn cstring(s: &str) -> CString {
    CString::new(s).unwrap_or_else(|_| CString::new(s.replace('\0', "")).unwrap())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ceqe_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ceqe_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ceqe_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Inverted index handle.
pub struct CeqeIndex(Index);

/// Builds an index from a TREC SGML or JSONL corpus file. `stemmer` is
/// `krovetz`, `porter2` or `none`; English stopwords are removed.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ceqe_index_build(
    corpus_path: *const c_char,
    stemmer: *const c_char,
    out: *mut *mut CeqeIndex,
) -> CeqeStatus {
    guard(|| {
        let path = text(corpus_path, "corpus_path")?;
        let stemmer: StemmerId = text(stemmer, "stemmer")?.parse()?;
        let analyzer = Analyzer::new(stemmer, Stopwords::english());
        let bytes = std::fs::read(path).map_err(|e| Error::at(path)(e.into()))?;
        let docs = match detect_format(&bytes) {
            Some(CorpusFormat::Jsonl) => {
                ingest_jsonl(&bytes, &analyzer).map_err(Error::at(path))?
            }
            Some(CorpusFormat::TrecSgml) => ingest_trec_sgml(&bytes, &analyzer).documents,
            None => Vec::new(),
        };
        if docs.is_empty() {
            return Err(Failure::new(
                CeqeStatus::InvalidArgument,
                format!("no documents in corpus {path}"),
            ));
        }
        put(out, CeqeIndex(Index::build(&docs, stemmer)?))
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ceqe_index_load(
    path: *const c_char,
    out: *mut *mut CeqeIndex,
) -> CeqeStatus {
    guard(|| {
        let path = text(path, "path")?;
        put(out, CeqeIndex(Index::load(path).map_err(Error::at(path))?))
    })
}

/// # Safety
/// `index` must be a live handle; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ceqe_index_save(
    index: *const CeqeIndex,
    path: *const c_char,
) -> CeqeStatus {
    guard(|| {
        let index = handle(index, "index")?;
        let path = text(path, "path")?;
        index.0.save(path).map_err(Error::at(path))?;
        Ok(())
    })
}

/// Number of documents; 0 for NULL.
///
/// # Safety
/// `index` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ceqe_index_doc_count(index: *const CeqeIndex) -> usize {
    index.as_ref().map_or(0, |i| i.0.doc_count())
}

/// Number of distinct indexed stems; 0 for NULL.
///
/// # Safety
/// `index` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ceqe_index_term_count(index: *const CeqeIndex) -> usize {
    index.as_ref().map_or(0, |i| i.0.vocabulary().count())
}

/// # Safety
/// `index` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ceqe_index_free(index: *mut CeqeIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Ranked documents for one query.
pub struct CeqeRanking {
    doc_ids: Vec<CString>,
    scores: Vec<f64>,
}

impl From<Ranking> for CeqeRanking {
    fn from(r: Ranking) -> Self {
        Self {
            doc_ids: r.entries.iter().map(|e| cstring(&e.doc_id)).collect(),
            scores: r.entries.iter().map(|e| e.score).collect(),
        }
    }
}

/// BM25 top-`k` for `query_text`, analyzed with the index's stemmer and
/// English stopwords.
///
/// # Safety
/// `index` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ceqe_index_bm25(
    index: *const CeqeIndex,
    query_text: *const c_char,
    k: usize,
    k1: f64,
    b: f64,
    out: *mut *mut CeqeRanking,
) -> CeqeStatus {
    guard(|| {
        let index = &handle(index, "index")?.0;
        let query = text(query_text, "query_text")?;
        let analyzer = Analyzer::new(index.stemmer(), Stopwords::english());
        let ranking = bm25_search(
            index,
            "q",
            &analyzer.tokenize(query),
            k,
            Bm25Params { k1, b },
        )?;
        put(out, CeqeRanking::from(ranking))
    })
}

/// # Safety
/// `ranking` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ceqe_ranking_len(ranking: *const CeqeRanking) -> usize {
    ranking.as_ref().map_or(0, |r| r.doc_ids.len())
}

/// Document id at rank `i` (0-based), or NULL when out of range. Owned by
/// the ranking.
///
/// # Safety
/// `ranking` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ceqe_ranking_doc_id(
    ranking: *const CeqeRanking,
    i: usize,
) -> *const c_char {
    ranking
        .as_ref()
        .and_then(|r| r.doc_ids.get(i))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Score at rank `i`, or NaN when out of range.
///
/// # Safety
/// `ranking` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ceqe_ranking_score(ranking: *const CeqeRanking, i: usize) -> f64 {
    ranking
        .as_ref()
        .and_then(|r| r.scores.get(i).copied())
        .unwrap_or(f64::NAN)
}

/// # Safety
/// `ranking` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ceqe_ranking_free(ranking: *mut CeqeRanking) {
    if !ranking.is_null() {
        drop(Box::from_raw(ranking));
    }
}

/// Memory-mapped mention store handle.
pub struct CeqeStore(MentionStore);

/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ceqe_store_open(
    path: *const c_char,
    out: *mut *mut CeqeStore,
) -> CeqeStatus {
    guard(|| {
        let path = text(path, "path")?;
        put(
            out,
            CeqeStore(MentionStore::open(path).map_err(Error::at(path))?),
        )
    })
}

/// # Safety
/// `store` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ceqe_store_dim(store: *const CeqeStore) -> usize {
    store.as_ref().map_or(0, |s| s.0.dim())
}

/// # Safety
/// `store` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ceqe_store_doc_count(store: *const CeqeStore) -> usize {
    store.as_ref().map_or(0, |s| s.0.doc_count())
}

/// # Safety
/// `store` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ceqe_store_mention_count(store: *const CeqeStore) -> u64 {
    store.as_ref().map_or(0, |s| s.0.mention_count())
}

/// # Safety
/// `store` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ceqe_store_free(store: *mut CeqeStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Retrieval engine configured from a TOML experiment file.
pub struct CeqeEngine {
    settings: Settings,
    assets: Assets,
}

/// Loads the config at `config_path` and every asset it names (index,
/// mention store, static vectors, query embeddings or encoder).
///
/// # Safety
/// `config_path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ceqe_engine_open(
    config_path: *const c_char,
    out: *mut *mut CeqeEngine,
) -> CeqeStatus {
    guard(|| {
        let cfg = Config::load(Path::new(text(config_path, "config_path")?))?;
        let assets = Assets::load(&cfg, &Method::ALL)?;
        put(
            out,
            CeqeEngine {
                settings: Settings::from(&cfg),
                assets,
            },
        )
    })
}

unsafe fn engine_query<'a>(
    engine: *const CeqeEngine,
    method: *const c_char,
    query_id: *const c_char,
    query_text: *const c_char,
) -> Result<(&'a CeqeEngine, Method, Topic), Failure> {
    let engine = handle(engine, "engine")?;
    let method: Method = text(method, "method")?.parse()?;
    let topic = Topic {
        id: text(query_id, "query_id")?.to_string(),
        text: text(query_text, "query_text")?.to_string(),
    };
    Ok((engine, method, topic))
}

/// Retrieves one query with `method` (`bm25`, `rm3`, `static`,
/// `static-prf`, `ceqe-centroid`, `ceqe-max`, `ceqe-mul`).
///
/// # Safety
/// `engine` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ceqe_engine_search(
    engine: *const CeqeEngine,
    method: *const c_char,
    query_id: *const c_char,
    query_text: *const c_char,
    out: *mut *mut CeqeRanking,
) -> CeqeStatus {
    guard(|| {
        let (engine, method, topic) = engine_query(engine, method, query_id, query_text)?;
        let e = engine.assets.engine(engine.settings)?;
        e.check_assets(method)?;
        put(out, CeqeRanking::from(e.run_query(method, &topic)?.ranking))
    })
}

/// Weighted expansion terms, heaviest first.
pub struct CeqeTerms {
    stems: Vec<CString>,
    weights: Vec<f64>,
}

/// Expansion term distribution of one query under `method` (any method
/// but `bm25`).
///
/// # Safety
/// `engine` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ceqe_engine_expand(
    engine: *const CeqeEngine,
    method: *const c_char,
    query_id: *const c_char,
    query_text: *const c_char,
    out: *mut *mut CeqeTerms,
) -> CeqeStatus {
    guard(|| {
        let (engine, method, topic) = engine_query(engine, method, query_id, query_text)?;
        let (dist, _) = engine
            .assets
            .engine(engine.settings)?
            .expand(method, &topic)?;
        let ranked = dist.ranked();
        put(
            out,
            CeqeTerms {
                stems: ranked.iter().map(|(s, _)| cstring(s)).collect(),
                weights: ranked.iter().map(|&(_, w)| w).collect(),
            },
        )
    })
}

/// # Safety
/// `engine` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ceqe_engine_free(engine: *mut CeqeEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// # Safety
/// `terms` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ceqe_terms_len(terms: *const CeqeTerms) -> usize {
    terms.as_ref().map_or(0, |t| t.stems.len())
}

/// Stem at position `i`, or NULL when out of range. Owned by `terms`.
///
/// # Safety
/// `terms` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ceqe_terms_stem(terms: *const CeqeTerms, i: usize) -> *const c_char {
    terms
        .as_ref()
        .and_then(|t| t.stems.get(i))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Weight at position `i`, or NaN when out of range.
///
/// # Safety
/// `terms` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ceqe_terms_weight(terms: *const CeqeTerms, i: usize) -> f64 {
    terms
        .as_ref()
        .and_then(|t| t.weights.get(i).copied())
        .unwrap_or(f64::NAN)
}

/// # Safety
/// `terms` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ceqe_terms_free(terms: *mut CeqeTerms) {
    if !terms.is_null() {
        drop(Box::from_raw(terms));
    }
}

/// Scores TREC run text against qrels text. `metrics` is a comma-separated
/// list (`map,ndcg_cut_10,…`) or NULL for the standard set. Writes a JSON
/// report to `out_json`; free it with [`ceqe_string_free`].
///
/// # Safety
/// Strings must be NUL-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ceqe_evaluate(
    run_text: *const c_char,
    qrels_text: *const c_char,
    metrics: *const c_char,
    out_json: *mut *mut c_char,
) -> CeqeStatus {
    guard(|| {
        let run = parse_run(text(run_text, "run_text")?)?;
        let qrels = parse_qrels(text(qrels_text, "qrels_text")?)?;
        let metrics: Vec<Metric> = if metrics.is_null() {
            Metric::standard()
        } else {
            text(metrics, "metrics")?
                .split(',')
                .map(|m| m.trim().parse())
                .collect::<Result<_, _>>()?
        };
        let (report, _) = evaluate(&run.rankings, &qrels, &metrics)?;
        if out_json.is_null() {
            return Err(Failure::new(
                CeqeStatus::NullArgument,
                "output pointer is null",
            ));
        }
        *out_json = cstring(&report.to_json()).into_raw();
        Ok(())
    })
}
