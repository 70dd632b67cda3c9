//! Cross-validated grid search.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Query id → metric values, for the evaluable queries of one grid point.
pub type PointScores = BTreeMap<String, Vec<f64>>;

/// Assignment of query ids to folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Folds {
    assignment: BTreeMap<String, usize>,
}

impl Folds {
    /// Shuffles the (sorted) ids with `seed` and deals them round-robin into
    /// `k` folds.
    pub fn random<S: AsRef<str>>(query_ids: &[S], k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 folds, got {k}"
            )));
        }
        let mut ids: Vec<&str> = query_ids
            .iter()
            .map(AsRef::as_ref)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if ids.len() < k {
            return Err(Error::InvalidArgument(format!(
                "{} queries cannot fill {k} folds",
                ids.len()
            )));
        }
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self {
            assignment: ids
                .into_iter()
                .enumerate()
                .map(|(i, q)| (q.to_string(), i % k))
                .collect(),
        })
    }

    pub fn from_assignment(assignment: BTreeMap<String, usize>) -> Result<Self> {
        let folds: BTreeSet<usize> = assignment.values().copied().collect();
        if folds.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "fold file defines {} fold(s), need at least 2",
                folds.len()
            )));
        }
        Ok(Self { assignment })
    }

    pub fn assignment(&self) -> &BTreeMap<String, usize> {
        &self.assignment
    }

    /// Distinct fold indices, ascending.
    pub fn folds(&self) -> Vec<usize> {
        self.assignment
            .values()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn fold_of(&self, query_id: &str) -> Option<usize> {
        self.assignment.get(query_id).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSelection<P> {
    pub fold: usize,
    pub point_index: usize,
    pub params: P,
    /// Mean target metric of the selected point on the training queries.
    pub train_mean: f64,
    pub test_queries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult<P> {
    pub selections: Vec<FoldSelection<P>>,
    /// Held-out metric values of every evaluable query under its fold's selection.
    pub pooled: PointScores,
    pub means: Vec<f64>,
}

fn mean_of(scores: &PointScores, ids: &[&str], metric: usize) -> f64 {
    ids.iter().map(|q| scores[*q][metric]).sum::<f64>() / ids.len() as f64
}

/// Evaluates every grid point once, then for each fold picks the point with
/// the highest mean `target` metric over the other folds' queries (ties go
/// to the earlier point) and scores the fold's own queries with it.
pub fn grid_search_cv<P, F>(
    grid: &[P],
    folds: &Folds,
    target: usize,
    evaluate: F,
) -> Result<CvResult<P>>
where
    P: Clone + Sync,
    F: Fn(&P) -> Result<PointScores> + Sync,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty parameter grid".into()));
    }
    let scores: Vec<PointScores> = grid.par_iter().map(&evaluate).collect::<Result<_>>()?;
    let metric_count = scores
        .iter()
        .flat_map(|s| s.values())
        .map(Vec::len)
        .next()
        .unwrap_or(0);
    if target >= metric_count {
        return Err(Error::InvalidArgument(format!(
            "target metric {target} out of range ({metric_count} metrics)"
        )));
    }
    // A query is usable only if every grid point produced a value for it.
    let evaluable: Vec<&str> = folds
        .assignment
        .keys()
        .map(String::as_str)
        .filter(|q| scores.iter().all(|s| s.contains_key(*q)))
        .collect();

    let mut selections = Vec::new();
    let mut pooled = PointScores::new();
    for fold in folds.folds() {
        let (test, train): (Vec<&str>, Vec<&str>) = evaluable
            .iter()
            .partition(|q| folds.fold_of(q) == Some(fold));
        if test.is_empty() {
            return Err(Error::Eval(format!("fold {fold} has no evaluable queries")));
        }
        if train.is_empty() {
            return Err(Error::Eval(format!(
                "fold {fold} has no evaluable training queries"
            )));
        }
        let mut best = 0;
        let mut best_mean = mean_of(&scores[0], &train, target);
        for (i, s) in scores.iter().enumerate().skip(1) {
            let m = mean_of(s, &train, target);
            if m > best_mean {
                best = i;
                best_mean = m;
            }
        }
        for q in &test {
            pooled.insert(q.to_string(), scores[best][*q].clone());
        }
        selections.push(FoldSelection {
            fold,
            point_index: best,
            params: grid[best].clone(),
            train_mean: best_mean,
            test_queries: test.iter().map(|q| q.to_string()).collect(),
        });
    }
    let means = (0..metric_count)
        .map(|m| pooled.values().map(|v| v[m]).sum::<f64>() / pooled.len() as f64)
        .collect();
    Ok(CvResult {
        selections,
        pooled,
        means,
    })
}

/// Feedback documents, feedback terms and interpolation weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPoint {
    pub fb_docs: usize,
    pub fb_terms: usize,
    pub lambda: f64,
}

pub fn feedback_grid(fb_docs: &[usize], fb_terms: &[usize], lambdas: &[f64]) -> Vec<FeedbackPoint> {
    let mut out = Vec::with_capacity(fb_docs.len() * fb_terms.len() * lambdas.len());
    for &d in fb_docs {
        for &t in fb_terms {
            for &lambda in lambdas {
                out.push(FeedbackPoint {
                    fb_docs: d,
                    fb_terms: t,
                    lambda,
                });
            }
        }
    }
    out
}

/// fb_docs 5..=100 by 5, fb_terms 10..=100 by 10, λ 0.10..=0.90 by 0.05.
pub fn standard_grid() -> Vec<FeedbackPoint> {
    let docs: Vec<usize> = (1..=20).map(|i| i * 5).collect();
    let terms: Vec<usize> = (1..=10).map(|i| i * 10).collect();
    let lambdas: Vec<f64> = (2..=18).map(|i| f64::from(i) * 5.0 / 100.0).collect();
    feedback_grid(&docs, &terms, &lambdas)
}
