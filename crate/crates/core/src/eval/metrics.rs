use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::trec::relevant_count;
use crate::Error;

/// A ranking metric with its cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Average precision over the first `k` documents.
    Ap(usize),
    Ndcg(usize),
    Precision(usize),
    Recall(usize),
}

impl Metric {
    pub const MAP: Metric = Metric::Ap(1000);

    /// The metrics reported by default.
    pub fn standard() -> Vec<Metric> {
        vec![
            Metric::MAP,
            Metric::Ndcg(10),
            Metric::Ndcg(20),
            Metric::Precision(20),
            Metric::Recall(100),
            Metric::Recall(1000),
        ]
    }

    /// Value for one ranked list. `None` when the query has no relevant
    /// document and the metric is undefined (AP, recall).
    pub fn compute(&self, ranked: &[&str], judgments: &BTreeMap<String, u32>) -> Option<f64> {
        match *self {
            Metric::Ap(k) => average_precision(ranked, judgments, k),
            Metric::Ndcg(k) => Some(ndcg(ranked, judgments, k)),
            Metric::Precision(k) => Some(precision_at(ranked, judgments, k)),
            Metric::Recall(k) => recall_at(ranked, judgments, k),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Metric::Ap(1000) => write!(f, "map"),
            Metric::Ap(k) => write!(f, "map_cut_{k}"),
            Metric::Ndcg(k) => write!(f, "ndcg_cut_{k}"),
            Metric::Precision(k) => write!(f, "P_{k}"),
            Metric::Recall(k) => write!(f, "recall_{k}"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::Config(format!("unknown metric {s:?}"));
        let cutoff = |rest: &str| {
            rest.parse::<usize>()
                .ok()
                .filter(|&k| k > 0)
                .ok_or_else(bad)
        };
        if s == "map" {
            return Ok(Metric::MAP);
        }
        if let Some(k) = s.strip_prefix("map_cut_") {
            return Ok(Metric::Ap(cutoff(k)?));
        }
        if let Some(k) = s
            .strip_prefix("ndcg_cut_")
            .or_else(|| s.strip_prefix("ndcg@"))
        {
            return Ok(Metric::Ndcg(cutoff(k)?));
        }
        if let Some(k) = s.strip_prefix("P_").or_else(|| s.strip_prefix("P@")) {
            return Ok(Metric::Precision(cutoff(k)?));
        }
        if let Some(k) = s
            .strip_prefix("recall_")
            .or_else(|| s.strip_prefix("recall@"))
        {
            return Ok(Metric::Recall(cutoff(k)?));
        }
        Err(bad())
    }
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn is_relevant(judgments: &BTreeMap<String, u32>, doc: &str) -> bool {
    judgments.get(doc).is_some_and(|&g| g > 0)
}

pub fn average_precision(
    ranked: &[&str],
    judgments: &BTreeMap<String, u32>,
    cutoff: usize,
) -> Option<f64> {
    let total = relevant_count(judgments);
    if total == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, doc) in ranked.iter().take(cutoff).enumerate() {
        if is_relevant(judgments, doc) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

/// Exponential gain, log2(rank + 1) discount; 0 when no document has a
/// positive grade.
pub fn ndcg(ranked: &[&str], judgments: &BTreeMap<String, u32>, k: usize) -> f64 {
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain(judgments.get(*d).copied().unwrap_or(0)) / ((i + 2) as f64).log2())
        .sum();
    let mut ideal: Vec<u32> = judgments.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / ((i + 2) as f64).log2())
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Relevant documents in the top `k`, divided by `k`.
pub fn precision_at(ranked: &[&str], judgments: &BTreeMap<String, u32>, k: usize) -> f64 {
    ranked
        .iter()
        .take(k)
        .filter(|d| is_relevant(judgments, d))
        .count() as f64
        / k as f64
}

pub fn recall_at(ranked: &[&str], judgments: &BTreeMap<String, u32>, k: usize) -> Option<f64> {
    let total = relevant_count(judgments);
    if total == 0 {
        return None;
    }
    Some(
        ranked
            .iter()
            .take(k)
            .filter(|d| is_relevant(judgments, d))
            .count() as f64
            / total as f64,
    )
}
