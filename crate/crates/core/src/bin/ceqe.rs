use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ceqe::config::{Config, ProviderKind};
use ceqe::corpus::{detect_format, ingest_jsonl, ingest_trec_sgml, CorpusFormat, Document};
use ceqe::embedding::{
    embed_query, extract_mentions, plan_chunks, write_query_embeddings, MentionStore,
    QueryEmbedding,
};
use ceqe::eval::{
    evaluate, feedback_grid, grid_search_cv, intrinsic_labels, intrinsic_precision, paired_t_test,
    parse_folds, parse_qrels, parse_run, parse_topics, pool_candidates, relevant_count, write_run,
    Folds, Label, Metric, Qrels, Topic,
};
use ceqe::expansion::{select_top, ExpansionEnvelope, StaticVectors};
use ceqe::index::Index;
use ceqe::pipeline::{make_provider, run_tag, Assets, Method};
use ceqe::text::Analyzer;
use ceqe::Error;

/// Query expansion experiments over contextual mention embeddings.
#[derive(Parser)]
#[command(name = "ceqe", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML experiment config; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice (fold splits, test encoder).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    index: Option<PathBuf>,
    /// Mention store file.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    #[arg(long, global = true)]
    static_vectors: Option<PathBuf>,
    /// Precomputed query embeddings (JSONL); implies `--provider precomputed`.
    #[arg(long, global = true)]
    query_embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    topics: Option<PathBuf>,
    #[arg(long, global = true)]
    qrels: Option<PathBuf>,
    #[arg(long, global = true)]
    folds: Option<PathBuf>,
    #[arg(long, global = true)]
    k1: Option<f64>,
    #[arg(long, global = true)]
    b: Option<f64>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    /// Documents retrieved per query.
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true)]
    fb_docs: Option<usize>,
    #[arg(long, global = true)]
    fb_terms: Option<usize>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true, value_enum)]
    provider: Option<ProviderArg>,
    /// Endpoint of a remote encoder.
    #[arg(long, global = true)]
    provider_url: Option<String>,
    /// Vector dimension of the encoder.
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true)]
    max_pieces: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Test,
    Remote,
    Precomputed,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Build the inverted index from a TREC SGML or JSONL corpus.
    Index,
    /// Write the chunk plan an external extractor should encode (JSONL).
    ExtractPlan,
    /// Encode the corpus and write the mention store.
    BuildStore,
    /// Encode topics and write query embeddings (JSONL).
    EmbedQueries,
    /// Derive a static vector table by averaging the store's mention vectors.
    StaticFromStore,
    /// Retrieve topics with one method and write a TREC run.
    #[command(alias = "search")]
    Run {
        #[arg(long, default_value = "bm25")]
        method: Method,
    },
    /// Write the expansion term distribution of every topic.
    Expand {
        #[arg(long)]
        method: Method,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Score a run against qrels.
    #[command(alias = "evaluate")]
    Eval {
        /// TREC run file.
        run: PathBuf,
        /// Comma-separated metric names; defaults to the standard set.
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<Metric>,
        #[arg(long, value_enum, default_value = "tsv")]
        format: Format,
        /// Second run to compare against with a paired t-test.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Cross-validated grid search over fb_docs, fb_terms and lambda.
    Tune {
        #[arg(long)]
        method: Method,
    },
    /// Label pooled expansion terms by their recall effect and score each method.
    Intrinsic {
        /// Comma-separated expansion methods; defaults to every method whose assets are configured.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        /// Terms per method entering the label pool.
        #[arg(long, default_value_t = 1000)]
        pool_depth: usize,
        /// Also write the per-term label table (TSV) here.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    let out = cli.global.output.as_deref();
    match cli.command {
        Command::Index => cmd_index(&cfg, out),
        Command::ExtractPlan => cmd_extract_plan(&cfg, out),
        Command::BuildStore => cmd_build_store(&cfg, out),
        Command::EmbedQueries => cmd_embed_queries(&cfg, out),
        Command::StaticFromStore => cmd_static_from_store(&cfg, out),
        Command::Run { method } => cmd_run(&cfg, method, out),
        Command::Expand { method, format } => cmd_expand(&cfg, method, format, out),
        Command::Eval {
            run,
            metrics,
            format,
            baseline,
        } => cmd_eval(&cfg, &run, metrics, format, baseline.as_deref(), out),
        Command::Tune { method } => cmd_tune(&cfg, method, out),
        Command::Intrinsic {
            methods,
            pool_depth,
            labels,
        } => cmd_intrinsic(&cfg, methods, pool_depth, labels.as_deref(), out),
        Command::Config => emit(out, cfg.to_toml().as_bytes()),
    }
}

fn load_config(g: &Global) -> Result<Config> {
    let mut cfg = match &g.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let paths = &mut cfg.paths;
    for (slot, flag) in [
        (&mut paths.corpus, &g.corpus),
        (&mut paths.index, &g.index),
        (&mut paths.store, &g.store),
        (&mut paths.static_vectors, &g.static_vectors),
        (&mut paths.query_embeddings, &g.query_embeddings),
        (&mut paths.topics, &g.topics),
        (&mut paths.qrels, &g.qrels),
        (&mut paths.folds, &g.folds),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
        cfg.provider.seed = seed;
    }
    let r = &mut cfg.retrieval;
    r.k1 = g.k1.unwrap_or(r.k1);
    r.b = g.b.unwrap_or(r.b);
    r.mu = g.mu.unwrap_or(r.mu);
    r.depth = g.depth.unwrap_or(r.depth);
    let e = &mut cfg.expansion;
    e.fb_docs = g.fb_docs.unwrap_or(e.fb_docs);
    e.fb_terms = g.fb_terms.unwrap_or(e.fb_terms);
    e.lambda = g.lambda.unwrap_or(e.lambda);
    let p = &mut cfg.provider;
    if g.query_embeddings.is_some() {
        p.kind = ProviderKind::Precomputed;
    }
    if let Some(kind) = g.provider {
        p.kind = match kind {
            ProviderArg::Test => ProviderKind::Test,
            ProviderArg::Remote => ProviderKind::Remote,
            ProviderArg::Precomputed => ProviderKind::Precomputed,
        };
    }
    if g.provider_url.is_some() {
        p.url.clone_from(&g.provider_url);
    }
    p.dim = g.dim.unwrap_or(p.dim);
    p.max_pieces = g.max_pieces.unwrap_or(p.max_pieces);
    cfg.validate()?;
    Ok(cfg)
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str, flag: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| {
        anyhow!(
            "no {what} given: pass --{flag} or set paths.{} in the config",
            flag.replace('-', "_")
        )
    })
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_corpus(cfg: &Config, analyzer: &Analyzer) -> Result<Vec<Document>> {
    let path = required(&cfg.paths.corpus, "corpus", "corpus")?;
    let bytes = fs::read(path).with_context(|| format!("cannot read corpus {}", path.display()))?;
    let docs = match detect_format(&bytes) {
        None => Vec::new(),
        Some(CorpusFormat::Jsonl) => {
            ingest_jsonl(&bytes, analyzer).with_context(|| format!("in {}", path.display()))?
        }
        Some(CorpusFormat::TrecSgml) => {
            let ingest = ingest_trec_sgml(&bytes, analyzer);
            for e in &ingest.errors {
                log::warn!("{}: {e}", path.display());
            }
            ingest.documents
        }
    };
    if docs.is_empty() {
        bail!("no documents in corpus {}", path.display());
    }
    Ok(docs)
}

fn load_topics(cfg: &Config) -> Result<Vec<Topic>> {
    let path = required(&cfg.paths.topics, "topics", "topics")?;
    parse_topics(&read_text(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_qrels(cfg: &Config) -> Result<Qrels> {
    let path = required(&cfg.paths.qrels, "qrels", "qrels")?;
    parse_qrels(&read_text(path)?).with_context(|| format!("in {}", path.display()))
}

fn write_warnings(w: &ceqe::Warnings) {
    // Library warnings are already logged when raised; count them so a quiet
    // log level still leaves a trace.
    if !w.is_empty() {
        log::info!("{} warning(s)", w.len());
    }
}

fn cmd_index(cfg: &Config, out: Option<&Path>) -> Result<()> {
    let analyzer = cfg.analysis.analyzer()?;
    let docs = load_corpus(cfg, &analyzer)?;
    let index = Index::build(&docs, cfg.analysis.stemmer)?;
    let path = out
        .or(cfg.paths.index.as_deref())
        .ok_or_else(|| anyhow!("no index path: pass --index or --output"))?;
    index
        .save(path)
        .with_context(|| format!("cannot write index {}", path.display()))?;
    println!(
        "indexed {} documents, {} terms -> {}",
        index.doc_count(),
        index.vocabulary().count(),
        path.display()
    );
    Ok(())
}

fn cmd_extract_plan(cfg: &Config, out: Option<&Path>) -> Result<()> {
    let analyzer = cfg.analysis.analyzer()?;
    let docs = load_corpus(cfg, &analyzer)?;
    let provider = make_provider(&cfg.provider, &analyzer)?;
    let (records, warnings) = plan_chunks(&docs, provider.as_ref(), cfg.provider.max_pieces)?;
    write_warnings(&warnings);
    let mut buf = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    emit(out, &buf)
}

fn cmd_build_store(cfg: &Config, out: Option<&Path>) -> Result<()> {
    let analyzer = cfg.analysis.analyzer()?;
    let docs = load_corpus(cfg, &analyzer)?;
    let provider = make_provider(&cfg.provider, &analyzer)?;
    let (writer, warnings) = extract_mentions(&docs, provider.as_ref(), cfg.provider.max_pieces)?;
    write_warnings(&warnings);
    let path = out
        .or(cfg.paths.store.as_deref())
        .ok_or_else(|| anyhow!("no store path: pass --store or --output"))?;
    writer
        .write(path)
        .with_context(|| format!("cannot write store {}", path.display()))?;
    println!(
        "stored {} mentions from {} documents -> {}",
        writer.len(),
        docs.len(),
        path.display()
    );
    Ok(())
}

fn cmd_embed_queries(cfg: &Config, out: Option<&Path>) -> Result<()> {
    let analyzer = cfg.analysis.analyzer()?;
    let topics = load_topics(cfg)?;
    let provider = make_provider(&cfg.provider, &analyzer)?;
    let embedded = topics
        .iter()
        .map(|t| embed_query(&t.id, &analyzer.tokenize(&t.text), provider.as_ref()))
        .collect::<ceqe::Result<Vec<QueryEmbedding>>>()?;
    let mut buf = Vec::new();
    write_query_embeddings(&mut buf, &embedded)?;
    emit(out, &buf)
}

fn cmd_static_from_store(cfg: &Config, out: Option<&Path>) -> Result<()> {
    let path = required(&cfg.paths.store, "mention store", "store")?;
    let store = MentionStore::open(path)
        .with_context(|| format!("cannot open store {}", path.display()))?;
    let table = StaticVectors::from_store(&store)?;
    let mut buf = Vec::new();
    table.write_text(&mut buf)?;
    emit(out, &buf)
}

fn cmd_run(cfg: &Config, method: Method, out: Option<&Path>) -> Result<()> {
    let topics = load_topics(cfg)?;
    let assets = Assets::load(cfg, &[method])?;
    let engine = assets.engine(cfg.into())?;
    let (rankings, warnings) = engine.run(method, &topics)?;
    write_warnings(&warnings);
    emit(
        out,
        write_run(&rankings, &run_tag(method, engine.settings())).as_bytes(),
    )
}

fn cmd_expand(cfg: &Config, method: Method, format: Format, out: Option<&Path>) -> Result<()> {
    if !method.expands() {
        bail!("method {method} does not expand queries");
    }
    let topics = load_topics(cfg)?;
    let assets = Assets::load(cfg, &[method])?;
    let engine = assets.engine(cfg.into())?;
    engine.check_assets(method)?;
    let params = cfg
        .expansion
        .params(method.pooling().unwrap_or(ceqe::expansion::Pooling::Max));
    let mut buf = Vec::new();
    for topic in &topics {
        let dist = match engine.expand(method, topic) {
            Ok((d, w)) => {
                write_warnings(&w);
                d
            }
            Err(e @ (Error::NoCandidates(_) | Error::Empty(_))) => {
                log::warn!("{e}; no expansion written");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        match format {
            Format::Json => {
                serde_json::to_writer(
                    &mut buf,
                    &ExpansionEnvelope::new(method.as_str(), params, &dist),
                )?;
                buf.push(b'\n');
            }
            Format::Tsv => {
                for line in dist.to_tsv().lines() {
                    writeln!(buf, "{}\t{line}", topic.id)?;
                }
            }
        }
    }
    emit(out, &buf)
}

fn read_run(path: &Path) -> Result<ceqe::eval::Run> {
    parse_run(&read_text(path)?).with_context(|| format!("in {}", path.display()))
}

fn cmd_eval(
    cfg: &Config,
    run: &Path,
    metrics: Vec<Metric>,
    format: Format,
    baseline: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let qrels = load_qrels(cfg)?;
    let metrics = if metrics.is_empty() {
        Metric::standard()
    } else {
        metrics
    };
    let (report, warnings) = evaluate(&read_run(run)?.rankings, &qrels, &metrics)?;
    write_warnings(&warnings);
    let comparison = match baseline {
        None => None,
        Some(path) => {
            let (base, warnings) = evaluate(&read_run(path)?.rankings, &qrels, &metrics)?;
            write_warnings(&warnings);
            let tests = metrics
                .iter()
                .map(|&m| {
                    Ok((
                        m,
                        paired_t_test(&report.column(m).unwrap(), &base.column(m).unwrap())?,
                    ))
                })
                .collect::<ceqe::Result<Vec<_>>>()?;
            Some(tests)
        }
    };
    let text = match format {
        Format::Tsv => {
            let mut s = report.to_tsv();
            for (m, t) in comparison.iter().flatten() {
                s.push_str(&format!(
                    "ttest_{m}\tdiff\t{:.4}\nttest_{m}\tt\t{:.4}\nttest_{m}\tp\t{:.4}\n",
                    t.mean_diff, t.t, t.p_value
                ));
            }
            s
        }
        Format::Json => {
            let mut v: serde_json::Value = serde_json::from_str(&report.to_json())?;
            if let Some(tests) = &comparison {
                let map: BTreeMap<String, _> =
                    tests.iter().map(|(m, t)| (m.to_string(), t)).collect();
                v["ttest"] = serde_json::to_value(map)?;
            }
            serde_json::to_string_pretty(&v)? + "\n"
        }
    };
    emit(out, text.as_bytes())
}

fn cmd_tune(cfg: &Config, method: Method, out: Option<&Path>) -> Result<()> {
    if !method.expands() {
        bail!("method {method} has no expansion parameters to tune");
    }
    let topics = load_topics(cfg)?;
    let qrels = load_qrels(cfg)?;
    let mut metrics = Metric::standard();
    let target = match metrics.iter().position(|&m| m == cfg.tune.metric) {
        Some(i) => i,
        None => {
            metrics.push(cfg.tune.metric);
            metrics.len() - 1
        }
    };
    let folds = match &cfg.paths.folds {
        Some(path) => Folds::from_assignment(
            parse_folds(&read_text(path)?).with_context(|| format!("in {}", path.display()))?,
        )?,
        None => {
            let judged: Vec<&str> = topics
                .iter()
                .filter(|t| qrels.get(&t.id).is_some_and(|j| relevant_count(j) > 0))
                .map(|t| t.id.as_str())
                .collect();
            Folds::random(&judged, cfg.tune.folds, cfg.seed)?
        }
    };
    let grid = feedback_grid(&cfg.tune.fb_docs, &cfg.tune.fb_terms, &cfg.tune.lambda);
    let assets = Assets::load(cfg, &[method])?;
    let engine = assets.engine(cfg.into())?;
    let sweep = engine.sweep(method, &topics, &grid, &qrels, &metrics)?;
    let cv = grid_search_cv(&(0..grid.len()).collect::<Vec<_>>(), &folds, target, |&i| {
        Ok(sweep[i].clone())
    })?;
    let selections: Vec<_> = cv
        .selections
        .iter()
        .map(|s| {
            json!({
                "fold": s.fold,
                "params": grid[s.point_index],
                "train_mean": s.train_mean,
                "test_queries": s.test_queries,
            })
        })
        .collect();
    let means: BTreeMap<String, f64> = metrics
        .iter()
        .map(Metric::to_string)
        .zip(cv.means.iter().copied())
        .collect();
    let per_query: BTreeMap<&String, BTreeMap<String, f64>> = cv
        .pooled
        .iter()
        .map(|(q, v)| {
            (
                q,
                metrics
                    .iter()
                    .map(Metric::to_string)
                    .zip(v.iter().copied())
                    .collect(),
            )
        })
        .collect();
    let report = json!({
        "method": method,
        "target": cfg.tune.metric,
        "grid_points": grid.len(),
        "seed": cfg.seed,
        "selections": selections,
        "means": means,
        "per_query": per_query,
    });
    emit(
        out,
        (serde_json::to_string_pretty(&report)? + "\n").as_bytes(),
    )
}

fn cmd_intrinsic(
    cfg: &Config,
    methods: Vec<Method>,
    pool_depth: usize,
    labels_out: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let topics = load_topics(cfg)?;
    let qrels = load_qrels(cfg)?;
    let explicit = !methods.is_empty();
    let mut methods: Vec<Method> = if explicit {
        methods
    } else {
        Method::ALL.into_iter().filter(|m| m.expands()).collect()
    };
    if let Some(m) = methods.iter().find(|m| !m.expands()) {
        bail!("method {m} does not expand queries");
    }
    let assets = Assets::load(cfg, &methods)?;
    let engine = assets.engine(cfg.into())?;
    if explicit {
        for &m in &methods {
            engine.check_assets(m)?;
        }
    } else {
        methods.retain(|&m| engine.check_assets(m).is_ok());
    }
    if methods.is_empty() {
        bail!("no expansion method has its assets configured");
    }

    let index = &assets.index;
    let fb_docs = cfg.expansion.fb_docs;
    // method → query → ranked candidate stems
    let mut rankings: BTreeMap<Method, BTreeMap<String, Vec<String>>> = BTreeMap::new();
    let mut labels: BTreeMap<String, BTreeMap<String, Label>> = BTreeMap::new();
    let mut table = String::from("query_id\tstem\tdelta_recall1000\tlabel\n");
    for topic in &topics {
        let Some(judged) = qrels.get(&topic.id).filter(|j| relevant_count(j) > 0) else {
            continue;
        };
        let tokens = engine.tokens(topic);
        let mut per_method = Vec::new();
        for &m in &methods {
            let ranked: Vec<String> = match engine.expansion_weights(m, &topic.id, &tokens, fb_docs)
            {
                Ok((w, _)) => select_top(&topic.id, &w, pool_depth)?
                    .ranked()
                    .into_iter()
                    .map(|(s, _)| s.to_string())
                    .collect(),
                Err(Error::NoCandidates(msg) | Error::Empty(msg)) => {
                    log::warn!("{m}: {msg}");
                    Vec::new()
                }
                Err(e) => return Err(e.into()),
            };
            rankings
                .entry(m)
                .or_default()
                .insert(topic.id.clone(), ranked.clone());
            per_method.push(ranked);
        }
        let pool = pool_candidates(per_method.iter().map(Vec::as_slice), pool_depth);
        let (known, unknown): (Vec<&str>, Vec<&str>) = pool
            .iter()
            .map(String::as_str)
            .partition(|s| index.term_id(s).is_some());
        if !unknown.is_empty() {
            log::warn!(
                "query {:?}: {} pooled term(s) not in the index were skipped",
                topic.id,
                unknown.len()
            );
        }
        let labelled =
            intrinsic_labels(index, &topic.id, &tokens, &known, judged, cfg.retrieval.mu)?;
        let entry = labels.entry(topic.id.clone()).or_default();
        for l in labelled {
            table.push_str(&format!(
                "{}\t{}\t{:.6}\t{}\n",
                l.query_id,
                l.stem,
                l.delta_recall1000,
                l.label.as_str()
            ));
            entry.insert(l.stem, l.label);
        }
    }
    if let Some(path) = labels_out {
        fs::write(path, &table).with_context(|| format!("cannot write {}", path.display()))?;
    }

    let mut report = String::from("method\tk\tmean\tqueries\n");
    let empty = BTreeMap::new();
    for &m in &methods {
        for k in [10, 20, 100] {
            let (p, w) = intrinsic_precision(rankings.get(&m).unwrap_or(&empty), &labels, k)?;
            write_warnings(&w);
            report.push_str(&format!("{m}\t{k}\t{:.4}\t{}\n", p.mean, p.per_query.len()));
        }
    }
    emit(out, report.as_bytes())
}
