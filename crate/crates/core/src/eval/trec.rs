//! TREC interchange formats: qrels, runs, topics and fold assignments.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::index::{Ranking, ScoredDoc};
use crate::{Error, Result};

/// query id → doc id → grade. Unjudged pairs are absent.
pub type Qrels = BTreeMap<String, BTreeMap<String, u32>>;

/// Parses `qid 0 docid grade` lines. Negative grades are clamped to 0.
pub fn parse_qrels(text: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [qid, _iter, doc, grade] = fields[..] else {
            return Err(Error::parse(
                n,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        };
        let grade: i64 = grade
            .parse()
            .map_err(|_| Error::parse(n, format!("bad grade {grade:?}")))?;
        let grade =
            u32::try_from(grade.max(0)).map_err(|_| Error::parse(n, "grade out of range"))?;
        if qrels
            .entry(qid.to_string())
            .or_default()
            .insert(doc.to_string(), grade)
            .is_some()
        {
            return Err(Error::parse(
                n,
                format!("duplicate judgment for ({qid}, {doc})"),
            ));
        }
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &Qrels) -> String {
    let mut out = String::new();
    for (qid, docs) in qrels {
        for (doc, grade) in docs {
            let _ = writeln!(out, "{qid} 0 {doc} {grade}");
        }
    }
    out
}

/// Number of documents with grade ≥ 1.
pub fn relevant_count(judgments: &BTreeMap<String, u32>) -> usize {
    judgments.values().filter(|&&g| g > 0).count()
}

/// Rankings read from a run file, in order of first appearance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Run {
    pub tag: String,
    pub rankings: Vec<Ranking>,
}

impl Run {
    pub fn get(&self, query_id: &str) -> Option<&Ranking> {
        self.rankings.iter().find(|r| r.query_id == query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.rankings.iter().map(|r| r.query_id.as_str())
    }
}

/// Parses `qid Q0 docid rank score tag` lines. Ranks of each query must
/// run 1, 2, 3, … in file order.
pub fn parse_run(text: &str) -> Result<Run> {
    let mut run = Run::default();
    let mut slot: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<(usize, String)> = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [qid, _q0, doc, rank, score, tag] = fields[..] else {
            return Err(Error::parse(
                n,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        };
        let rank: usize = rank
            .parse()
            .map_err(|_| Error::parse(n, format!("bad rank {rank:?}")))?;
        let score: f64 = score
            .parse()
            .map_err(|_| Error::parse(n, format!("bad score {score:?}")))?;
        if !score.is_finite() {
            return Err(Error::parse(n, "score must be finite"));
        }
        if run.rankings.is_empty() {
            run.tag = tag.to_string();
        }
        let idx = *slot.entry(qid.to_string()).or_insert_with(|| {
            run.rankings.push(Ranking::new(qid));
            run.rankings.len() - 1
        });
        let ranking = &mut run.rankings[idx];
        if rank != ranking.entries.len() + 1 {
            return Err(Error::parse(
                n,
                format!(
                    "query {qid}: rank {rank} follows rank {}; ranks must be consecutive from 1",
                    ranking.entries.len()
                ),
            ));
        }
        if !seen.insert((idx, doc.to_string())) {
            return Err(Error::parse(
                n,
                format!("query {qid}: document {doc} listed twice"),
            ));
        }
        ranking.entries.push(ScoredDoc {
            doc_id: doc.to_string(),
            score,
        });
    }
    Ok(run)
}

/// Run file text; scores are written with six decimals.
pub fn write_run<'a>(rankings: impl IntoIterator<Item = &'a Ranking>, tag: &str) -> String {
    let mut out = String::new();
    for r in rankings {
        for (i, e) in r.entries.iter().enumerate() {
            let _ = writeln!(
                out,
                "{} Q0 {} {} {:.6} {tag}",
                r.query_id,
                e.doc_id,
                i + 1,
                e.score
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub id: String,
    pub text: String,
}

/// Reads `qid<TAB>text` lines, or TREC `<top>` blocks (the title field is
/// used as the query).
pub fn parse_topics(text: &str) -> Result<Vec<Topic>> {
    let topics = if text.contains("<top>") {
        parse_sgml_topics(text)?
    } else {
        parse_tsv_topics(text)?
    };
    let mut ids = HashSet::new();
    for t in &topics {
        if !ids.insert(&t.id) {
            return Err(Error::DuplicateId(t.id.clone()));
        }
    }
    Ok(topics)
}

fn parse_tsv_topics(text: &str) -> Result<Vec<Topic>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, query) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(i + 1, "expected query_id<TAB>query"))?;
        out.push(Topic {
            id: id.trim().to_string(),
            text: query.trim().to_string(),
        });
    }
    Ok(out)
}

fn field<'a>(block: &'a str, tag: &str) -> Option<&'a str> {
    let start = block.find(tag)? + tag.len();
    let rest = &block[start..];
    Some(rest[..rest.find('<').unwrap_or(rest.len())].trim())
}

fn parse_sgml_topics(text: &str) -> Result<Vec<Topic>> {
    let mut out = Vec::new();
    for (i, block) in text.split("<top>").skip(1).enumerate() {
        let block = block.split("</top>").next().unwrap_or(block);
        let num = field(block, "<num>")
            .ok_or_else(|| Error::Format(format!("topic block {} has no <num>", i + 1)))?;
        let id = num.trim_start_matches("Number:").trim();
        let title = field(block, "<title>")
            .ok_or_else(|| Error::Format(format!("topic {id} has no <title>")))?;
        let title = title.trim_start_matches("Topic:").trim();
        out.push(Topic {
            id: id.to_string(),
            text: title.split_whitespace().collect::<Vec<_>>().join(" "),
        });
    }
    Ok(out)
}

/// Reads `fold_index<TAB>query_id` lines.
pub fn parse_folds(text: &str) -> Result<BTreeMap<String, usize>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (fold, qid) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(i + 1, "expected fold_index<TAB>query_id"))?;
        let fold: usize = fold
            .trim()
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("bad fold index {fold:?}")))?;
        if out.insert(qid.trim().to_string(), fold).is_some() {
            return Err(Error::parse(i + 1, format!("query {qid} assigned twice")));
        }
    }
    Ok(out)
}

pub fn write_folds(assignment: &BTreeMap<String, usize>) -> String {
    let mut out = String::new();
    for (qid, fold) in assignment {
        let _ = writeln!(out, "{fold}\t{qid}");
    }
    out
}
