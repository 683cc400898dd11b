//! Inverted index with BM25 scoring.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::model::UnitId;
use crate::text::{is_stopword, tokenize};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct InvertedIndex {
    postings: BTreeMap<String, BTreeMap<UnitId, u32>>,
    doc_len: BTreeMap<UnitId, u32>,
    total_len: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub stopwords: bool,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: 1.2,
            b: 0.75,
            stopwords: false,
        }
    }
}

impl InvertedIndex {
    pub fn insert(&mut self, id: UnitId, text: &str) {
        self.remove(id);
        let tokens = tokenize(text);
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in &tokens {
            *tf.entry(t.clone()).or_default() += 1;
        }
        for (term, count) in tf {
            self.postings.entry(term).or_default().insert(id, count);
        }
        self.doc_len.insert(id, tokens.len() as u32);
        self.total_len += tokens.len() as u64;
    }

    pub fn remove(&mut self, id: UnitId) {
        let Some(len) = self.doc_len.remove(&id) else {
            return;
        };
        self.total_len -= u64::from(len);
        self.postings.retain(|_, docs| {
            docs.remove(&id);
            !docs.is_empty()
        });
    }

    pub fn contains(&self, id: UnitId) -> bool {
        self.doc_len.contains_key(&id)
    }

    pub fn doc_count(&self) -> usize {
        self.doc_len.len()
    }

    pub fn doc_len(&self, id: UnitId) -> Option<u32> {
        self.doc_len.get(&id).copied()
    }

    /// Term frequencies recorded for `id`, for coherence checks.
    pub fn terms_of(&self, id: UnitId) -> BTreeMap<String, u32> {
        self.postings
            .iter()
            .filter_map(|(term, docs)| docs.get(&id).map(|tf| (term.clone(), *tf)))
            .collect()
    }

    /// Distinct query terms that survive filtering.
    pub fn query_terms(query: &str, params: Bm25Params) -> BTreeSet<String> {
        tokenize(query)
            .into_iter()
            .filter(|t| !(params.stopwords && is_stopword(t)))
            .collect()
    }

    /// BM25 score for every document matching at least one query term.
    ///
    /// `idf = ln(1 + (N - df + 0.5) / (df + 0.5))`; each distinct query term
    /// contributes once.
    pub fn score(&self, query: &str, params: Bm25Params) -> BTreeMap<UnitId, f64> {
        let mut scores: BTreeMap<UnitId, f64> = BTreeMap::new();
        let n = self.doc_len.len() as f64;
        if n == 0.0 {
            return scores;
        }
        let avgdl = self.total_len as f64 / n;
        for term in Self::query_terms(query, params) {
            let Some(docs) = self.postings.get(&term) else {
                continue;
            };
            let df = docs.len() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            for (&id, &tf) in docs {
                let tf = f64::from(tf);
                let dl = f64::from(self.doc_len[&id]);
                let norm = if avgdl > 0.0 { dl / avgdl } else { 0.0 };
                let s = idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm));
                *scores.entry(id).or_default() += s;
            }
        }
        scores
    }
}
