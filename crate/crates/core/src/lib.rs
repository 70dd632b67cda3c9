//! Pseudo-relevance feedback with contextualized mention embeddings.
//!
//! The crate is organised around the retrieval pipeline:
//!
//! * [`text`] and [`corpus`] turn raw collections into [`corpus::Document`]s,
//! * [`index`] builds the inverted index and scores BM25 / Dirichlet query likelihood,
//! * [`embedding`] holds per-mention vectors, chunking and the embedding providers,
//! * [`expansion`] computes feedback term distributions (RM3, static embeddings, CEQE),
//! * [`eval`] parses TREC files, computes metrics and tunes parameters,
//! * [`pipeline`] wires the pieces together for whole-run execution.

pub mod config;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod expansion;
pub mod index;
pub mod pipeline;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};

/// Non-fatal diagnostics collected while running an operation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Warnings(Vec<String>);

impl Warnings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.0.push(msg);
    }

    pub fn extend(&mut self, other: Warnings) {
        self.0.extend(other.0);
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}
