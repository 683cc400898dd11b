//! The four retrieval channels. Each produces a [`RankedList`] ordered by
//! score descending, then `mentioned_at` descending, then unit id ascending.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::model::{Timestamp, UnitId};
use crate::store::{Bank, Bm25Params};
use crate::temporal::TimeRange;
use crate::time::midpoint_secs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Semantic,
    Keyword,
    Graph,
    Temporal,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::Semantic,
        Channel::Keyword,
        Channel::Graph,
        Channel::Temporal,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub unit_id: UnitId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub channel: Channel,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn new(channel: Channel) -> Self {
        Self {
            channel,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// 1-based rank of `id`, if present.
    pub fn rank_of(&self, id: UnitId) -> Option<usize> {
        self.entries.iter().position(|e| e.unit_id == id).map(|p| p + 1)
    }

    pub fn ids(&self) -> Vec<UnitId> {
        self.entries.iter().map(|e| e.unit_id).collect()
    }
}

/// The engine-wide ordering: score desc, mentioned_at desc, id asc.
pub fn rank_order(a: (f64, Timestamp, UnitId), b: (f64, Timestamp, UnitId)) -> Ordering {
    b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2))
}

/// Sorts scored units with [`rank_order`] and keeps the first `n`.
pub fn ranked(
    channel: Channel,
    scores: impl IntoIterator<Item = (UnitId, f64)>,
    bank: &Bank,
    n: usize,
) -> RankedList {
    let mut keyed: Vec<(f64, Timestamp, UnitId)> = scores
        .into_iter()
        .filter_map(|(id, s)| bank.mentioned_at(id).map(|t| (s, t, id)))
        .collect();
    keyed.sort_by(|a, b| rank_order(*a, *b));
    keyed.truncate(n);
    RankedList {
        channel,
        entries: keyed
            .into_iter()
            .map(|(score, _, unit_id)| RankedEntry { unit_id, score })
            .collect(),
    }
}

/// Top-`n` units by cosine similarity to the query embedding.
pub fn semantic_search(query_embedding: &[f64], bank: &Bank, n: usize) -> RankedList {
    ranked(Channel::Semantic, bank.vectors().scores(query_embedding), bank, n)
}

/// Top-`n` units by BM25 over the bank's inverted index.
pub fn keyword_search(query: &str, bank: &Bank, n: usize, params: Bm25Params) -> RankedList {
    ranked(Channel::Keyword, bank.lexical().score(query, params), bank, n)
}

/// `1 - |mid_f - mid_q| / (width / 2)`, clamped to [0, 1]. A zero-width
/// range is treated as one second wide.
pub fn temporal_score(fact: (Timestamp, Timestamp), range: TimeRange) -> f64 {
    let width = ((range.1 - range.0).num_seconds() as f64).max(1.0);
    let d = (midpoint_secs(fact.0, fact.1) - midpoint_secs(range.0, range.1)).abs();
    (1.0 - d / (width / 2.0)).clamp(0.0, 1.0)
}

/// Units whose occurrence interval overlaps `range`, scored by proximity of
/// midpoints.
pub fn temporal_search(range: TimeRange, bank: &Bank, n: usize) -> RankedList {
    let scores = bank
        .units()
        .filter(|u| u.occurred_start <= range.1 && range.0 <= u.occurred_end)
        .map(|u| (u.id, temporal_score((u.occurred_start, u.occurred_end), range)));
    ranked(Channel::Temporal, scores, bank, n)
}

/// Spreading activation from `entries` (initial activation = their score,
/// floored at 0).
///
/// Each of `max_hops` synchronous steps sets
/// `A(j) = max(A(j), max over edges i→j of A(i) · w · δ · μ(kind))`, capped
/// at 1. Returns every entry and every node with positive activation.
pub fn graph_search(entries: &[RankedEntry], bank: &Bank, config: &EngineConfig) -> RankedList {
    let mut act: BTreeMap<UnitId, f64> = BTreeMap::new();
    for e in entries {
        let a = e.score.clamp(0.0, 1.0);
        let slot = act.entry(e.unit_id).or_insert(a);
        *slot = slot.max(a);
    }
    for _ in 0..config.max_hops {
        let mut next = act.clone();
        for (&src, &a) in &act {
            if a <= 0.0 {
                continue;
            }
            for edge in bank.out_edges(src) {
                let push =
                    (a * edge.weight * config.activation_decay * config.link_multipliers.get(edge.kind))
                        .min(1.0);
                let slot = next.entry(edge.target).or_insert(0.0);
                if push > *slot {
                    *slot = push;
                }
            }
        }
        if next == act {
            break;
        }
        act = next;
    }
    let is_entry: std::collections::BTreeSet<UnitId> = entries.iter().map(|e| e.unit_id).collect();
    let scores = act
        .into_iter()
        .filter(|(id, a)| *a > 0.0 || is_entry.contains(id));
    ranked(Channel::Graph, scores, bank, usize::MAX)
}
