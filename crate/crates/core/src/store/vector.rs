use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::UnitId;

/// Cosine similarity; zero vectors score 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Exact vector index (linear scan).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VectorIndex {
    vectors: BTreeMap<UnitId, Vec<f64>>,
}

impl VectorIndex {
    pub fn insert(&mut self, id: UnitId, v: &[f64]) {
        self.vectors.insert(id, v.to_vec());
    }

    pub fn remove(&mut self, id: UnitId) {
        self.vectors.remove(&id);
    }

    pub fn get(&self, id: UnitId) -> Option<&[f64]> {
        self.vectors.get(&id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Cosine of `query` against every stored vector, in id order.
    pub fn scores<'a>(&'a self, query: &'a [f64]) -> impl Iterator<Item = (UnitId, f64)> + 'a {
        self.vectors.iter().map(move |(id, v)| (*id, cosine(query, v)))
    }
}
