//! Fixtures and brute-force reference implementations shared by the
//! integration tests. The oracles deliberately avoid the engine's own
//! index structures: they recompute every score from raw unit fields.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use membank_core::model::{
    BankId, BankProfile, CausalKind, Edge, EdgeKind, EntityId, MemoryUnit, Network, Timestamp, UnitId,
    UnitMetadata,
};
use membank_core::providers::mock::MockEmbedder;
use membank_core::providers::Turn;
use membank_core::store::Bank;
use membank_core::time::parse_timestamp;
use membank_core::EngineConfig;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn ts(s: &str) -> Timestamp {
    parse_timestamp(s).expect("valid timestamp")
}

pub fn turn(speaker: &str, text: &str, at: &str) -> Turn {
    Turn {
        speaker: speaker.into(),
        text: text.into(),
        timestamp: ts(at),
    }
}

pub fn small_config() -> EngineConfig {
    EngineConfig {
        embedding_dim: 64,
        ..EngineConfig::default()
    }
}

/// Inserts a unit with a mock embedding and returns its id.
pub fn put_unit(
    bank: &mut Bank,
    cfg: &EngineConfig,
    text: &str,
    occurred: (Timestamp, Timestamp),
    mentioned: Timestamp,
) -> UnitId {
    let emb = MockEmbedder::new(bank.embedding_dim())
        .embed_text(text)
        .expect("mock embed");
    let id = bank.allocate_unit_id();
    let unit = MemoryUnit {
        id,
        bank_id: bank.id().clone(),
        text: text.into(),
        embedding: emb,
        occurred_start: occurred.0,
        occurred_end: occurred.1,
        mentioned_at: mentioned,
        network: Network::World,
        confidence: None,
        metadata: UnitMetadata::default(),
    };
    bank.upsert_units(vec![unit], cfg).expect("valid unit");
    id
}

pub const VOCAB: &[&str] = &[
    "alice", "bob", "carol", "hiking", "paris", "tennis", "coffee", "meeting", "project", "deadline",
    "garden", "river", "concert", "piano", "startup", "funding", "doctor", "visit", "train", "station",
    "birthday", "party", "recipe", "pasta", "marathon", "training", "book", "novel", "museum", "trip",
    "weekend", "camping", "lake", "office", "launch", "review", "the", "a", "with", "at",
];

/// Random bank of `n` world units with random texts, intervals and edges.
pub fn random_bank(rng: &mut impl Rng, n: usize, cfg: &EngineConfig) -> Bank {
    let mut bank = Bank::new(BankId::new("rnd"), BankProfile::new("R"), cfg.embedding_dim);
    let base = ts("2024-01-01T00:00:00Z");
    let mut texts: Vec<String> = Vec::new();
    for i in 0..n {
        let text = if i > 0 && rng.gen_bool(0.05) {
            texts[rng.gen_range(0..texts.len())].clone()
        } else {
            let len = rng.gen_range(2..=14);
            (0..len)
                .map(|_| *VOCAB.choose(rng).expect("non-empty"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        texts.push(text.clone());
        let start = base + Duration::hours(rng.gen_range(0..24 * 365));
        let end = start + Duration::hours(rng.gen_range(0..24 * 5));
        // Coarse mention times so the tie-break on mentioned_at is exercised.
        let mentioned = base + Duration::days(rng.gen_range(0..20));
        put_unit(&mut bank, cfg, &text, (start, end), mentioned);
    }
    let ids: Vec<UnitId> = bank.units().map(|u| u.id).collect();
    for &src in &ids {
        for _ in 0..rng.gen_range(0..5) {
            let dst = *ids.choose(rng).expect("non-empty");
            if dst == src {
                continue;
            }
            let edge = match rng.gen_range(0..4) {
                0 => Edge::temporal(src, dst, rng.gen_range(0.0..=1.0)),
                1 => Edge::semantic(src, dst, rng.gen_range(0.8..=1.0)),
                2 => Edge::entity(src, dst, EntityId(rng.gen_range(1..10))),
                _ => Edge::causal(src, dst, CausalKind::Causes),
            };
            bank.insert_edge(edge).expect("valid edge");
        }
    }
    bank
}

pub fn random_query(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(1..=4);
    (0..len)
        .map(|_| *VOCAB.choose(rng).expect("non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Reference ordering: score desc, mention time desc, id asc.
pub fn oracle_order(bank: &Bank, mut scored: Vec<(UnitId, f64)>) -> Vec<(UnitId, f64)> {
    scored.sort_by(|a, b| {
        let ta = bank.unit(a.0).expect("unit").mentioned_at;
        let tb = bank.unit(b.0).expect("unit").mentioned_at;
        match b.1.partial_cmp(&a.1).expect("finite scores") {
            Ordering::Equal => tb.cmp(&ta).then(a.0.cmp(&b.0)),
            o => o,
        }
    });
    scored
}

pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn oracle_semantic(bank: &Bank, query_emb: &[f64]) -> Vec<(UnitId, f64)> {
    let scored = bank
        .units()
        .map(|u| (u.id, oracle_cosine(query_emb, &u.embedding)))
        .collect();
    oracle_order(bank, scored)
}

fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// From-scratch BM25 (k1, b) over the raw unit texts, no stopwords.
pub fn oracle_bm25(bank: &Bank, query: &str, k1: f64, b: f64) -> Vec<(UnitId, f64)> {
    let docs: Vec<(UnitId, Vec<String>)> = bank.units().map(|u| (u.id, oracle_tokens(&u.text))).collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.1.len()).sum::<usize>() as f64 / n;
    let terms: BTreeSet<String> = oracle_tokens(query).into_iter().collect();
    let mut scored = Vec::new();
    for (id, toks) in &docs {
        let mut total = 0.0;
        let mut matched = false;
        for term in &terms {
            let tf = toks.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = docs.iter().filter(|d| d.1.contains(term)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let norm = toks.len() as f64 / avgdl;
            total += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
        }
        if matched {
            scored.push((*id, total));
        }
    }
    oracle_order(bank, scored)
}

/// Interval scan: overlapping units scored by midpoint proximity.
pub fn oracle_temporal(bank: &Bank, range: (Timestamp, Timestamp)) -> Vec<(UnitId, f64)> {
    let (qs, qe) = (range.0.timestamp() as f64, range.1.timestamp() as f64);
    let width = (qe - qs).max(1.0);
    let qmid = (qs + qe) / 2.0;
    let scored = bank
        .units()
        .filter(|u| !(u.occurred_end < range.0 || u.occurred_start > range.1))
        .map(|u| {
            let mid = (u.occurred_start.timestamp() as f64 + u.occurred_end.timestamp() as f64) / 2.0;
            let s = 1.0 - (mid - qmid).abs() / (width / 2.0);
            (u.id, s.clamp(0.0, 1.0))
        })
        .collect();
    oracle_order(bank, scored)
}

/// Path enumeration: a node's activation is the best capped product along
/// any walk of at most `max_hops` edges from an entry point.
pub fn oracle_graph(bank: &Bank, entries: &[(UnitId, f64)], cfg: &EngineConfig) -> Vec<(UnitId, f64)> {
    let mut adj: BTreeMap<UnitId, Vec<(UnitId, f64, EdgeKind)>> = BTreeMap::new();
    for e in bank.edges() {
        adj.entry(e.source)
            .or_default()
            .push((e.target, e.weight, e.kind));
    }
    let mut best: BTreeMap<UnitId, f64> = BTreeMap::new();
    fn walk(
        node: UnitId,
        a: f64,
        hops_left: usize,
        adj: &BTreeMap<UnitId, Vec<(UnitId, f64, EdgeKind)>>,
        cfg: &EngineConfig,
        best: &mut BTreeMap<UnitId, f64>,
    ) {
        let slot = best.entry(node).or_insert(0.0);
        if a > *slot {
            *slot = a;
        }
        if hops_left == 0 || a <= 0.0 {
            return;
        }
        for &(next, w, kind) in adj.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
            let mu = match kind {
                EdgeKind::Temporal => cfg.link_multipliers.temporal,
                EdgeKind::Semantic => cfg.link_multipliers.semantic,
                EdgeKind::Entity => cfg.link_multipliers.entity,
                EdgeKind::Causal => cfg.link_multipliers.causal,
            };
            let pushed = (a * w * cfg.activation_decay * mu).min(1.0);
            walk(next, pushed, hops_left - 1, adj, cfg, best);
        }
    }
    for &(id, s) in entries {
        walk(id, s.clamp(0.0, 1.0), cfg.max_hops, &adj, cfg, &mut best);
    }
    let entry_ids: BTreeSet<UnitId> = entries.iter().map(|e| e.0).collect();
    let scored = best
        .into_iter()
        .filter(|(id, a)| *a > 0.0 || entry_ids.contains(id))
        .collect();
    oracle_order(bank, scored)
}

/// Direct evaluation of reciprocal rank fusion from 1-based ranks.
pub fn oracle_rrf(lists: &[Vec<UnitId>], k: u32) -> BTreeMap<UnitId, f64> {
    let mut out = BTreeMap::new();
    for list in lists {
        for (i, id) in list.iter().enumerate() {
            *out.entry(*id).or_insert(0.0) += 1.0 / (k as f64 + (i + 1) as f64);
        }
    }
    out
}

/// Longest prefix of `sizes` whose sum stays within `budget`, by exhaustive scan.
pub fn oracle_prefix(sizes: &[usize], budget: usize) -> (usize, usize) {
    let mut best = (0, 0);
    for p in 0..=sizes.len() {
        let total: usize = sizes[..p].iter().sum();
        if total <= budget {
            best = (p, total);
        }
    }
    best
}
