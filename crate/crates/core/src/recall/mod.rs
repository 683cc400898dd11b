//! Budgeted multi-channel retrieval.
//!
//! Semantic, keyword and (when the query names a time) temporal channels run
//! concurrently over one bank snapshot; the graph channel is seeded from the
//! top semantic hits. Lists are fused by reciprocal rank, the head of the
//! fused list is reranked, and the result is packed into the token budget.

pub mod budget;
pub mod channels;
pub mod fusion;
pub mod rerank;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use budget::{approx_tokens, pack_budget};
pub use channels::{
    graph_search, keyword_search, rank_order, semantic_search, temporal_score, temporal_search, Channel,
    RankedEntry, RankedList,
};
pub use fusion::{rrf_fuse, rrf_score, FusedEntry};
pub use rerank::{rerank, rerank_input, RerankOutcome};

use crate::config::EngineConfig;
use crate::error::Result;
use crate::model::{Network, Timestamp, UnitId};
use crate::providers::ProviderSuite;
use crate::store::{Bank, Bm25Params};
use crate::temporal::{parse_temporal, TimeRange};
use crate::time::time_reference;

/// Per-call switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallOptions {
    pub graph: bool,
    pub keyword: bool,
    pub temporal: bool,
    pub rerank: bool,
    /// Include per-channel lists and the fused ranking in the result.
    pub explain: bool,
}

impl Default for RecallOptions {
    fn default() -> Self {
        Self {
            graph: true,
            keyword: true,
            temporal: true,
            rerank: true,
            explain: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallItem {
    pub unit_id: UnitId,
    pub text: String,
    pub network: Network,
    pub occurred_start: Timestamp,
    pub occurred_end: Timestamp,
    pub mentioned_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub fused_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank_score: Option<f64>,
    pub channels_hit: Vec<Channel>,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub lists: Vec<RankedList>,
    pub fused: Vec<FusedEntry>,
    pub reranked: Vec<UnitId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    pub items: Vec<RecallItem>,
    pub total_tokens: usize,
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_range_used: Option<TimeRange>,
    pub rerank_fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explain: Option<Explanation>,
}

impl RecallResult {
    pub fn empty(budget: usize) -> Self {
        Self {
            items: Vec::new(),
            total_tokens: 0,
            budget,
            temporal_range_used: None,
            rerank_fallback: false,
            explain: None,
        }
    }

    pub fn ids(&self) -> Vec<UnitId> {
        self.items.iter().map(|i| i.unit_id).collect()
    }
}

/// Query range from the rule parser, else from the fallback provider.
pub fn resolve_range(query: &str, now: Timestamp, providers: &ProviderSuite) -> Result<Option<TimeRange>> {
    if let Some(r) = parse_temporal(query, now)? {
        return Ok(Some(r));
    }
    match providers.resolve_temporal(query, now) {
        Ok(r) => Ok(r),
        Err(err) => {
            tracing::warn!(error = %err, "temporal fallback failed");
            Ok(None)
        }
    }
}

/// Query as the reranker sees it. A resolved time range is appended in the
/// same form as the candidates' time prefix, so relative expressions such as
/// "last weekend" can be matched against absolute dates.
pub fn rerank_query(query: &str, range: Option<TimeRange>) -> String {
    match range {
        Some((s, e)) => format!("{query} [{}]", time_reference(s, e)),
        None => query.to_string(),
    }
}

/// Runs the channels over `bank` and returns their lists in the order
/// semantic, keyword, graph, temporal (absent channels omitted).
pub fn channel_lists(
    bank: &Bank,
    query: &str,
    query_embedding: &[f64],
    range: Option<TimeRange>,
    config: &EngineConfig,
    options: RecallOptions,
) -> Vec<RankedList> {
    let n = config.channel_pool_size;
    let params = Bm25Params {
        k1: config.bm25_k1,
        b: config.bm25_b,
        stopwords: config.bm25_stopwords,
    };
    let (semantic, graph, keyword, temporal) = std::thread::scope(|s| {
        let kw = options
            .keyword
            .then(|| s.spawn(move || keyword_search(query, bank, n, params)));
        let tm = range
            .filter(|_| options.temporal)
            .map(|r| s.spawn(move || temporal_search(r, bank, n)));
        let semantic = semantic_search(query_embedding, bank, n);
        let graph = options.graph.then(|| {
            let k = config.graph_entry_points.min(semantic.len());
            graph_search(&semantic.entries[..k], bank, config)
        });
        (
            semantic,
            graph,
            kw.map(|h| h.join().expect("keyword channel panicked")),
            tm.map(|h| h.join().expect("temporal channel panicked")),
        )
    });
    [Some(semantic), keyword, graph, temporal]
        .into_iter()
        .flatten()
        .collect()
}

/// Full recall over one bank snapshot.
pub fn recall(
    bank: &Bank,
    query: &str,
    budget: usize,
    providers: &ProviderSuite,
    config: &EngineConfig,
    now: Timestamp,
    options: RecallOptions,
) -> Result<RecallResult> {
    if bank.is_empty() || query.trim().is_empty() {
        return Ok(RecallResult::empty(budget));
    }
    let range = if options.temporal {
        resolve_range(query, now, providers)?
    } else {
        None
    };
    let query_embedding = providers.embed(query, bank.embedding_dim())?;
    let lists = channel_lists(bank, query, &query_embedding, range, config, options);
    let fused = rrf_fuse(&lists, config.rrf_k, bank);
    let fused_ids: Vec<UnitId> = fused.iter().map(|f| f.unit_id).collect();

    let outcome = if options.rerank {
        rerank(
            &rerank_query(query, range),
            &fused_ids,
            bank,
            providers,
            config.rerank_window,
        )
    } else {
        RerankOutcome {
            order: fused_ids.clone(),
            scores: BTreeMap::new(),
            fallback: false,
        }
    };

    let (taken, total_tokens) = pack_budget(&outcome.order, budget, |id| {
        approx_tokens(&bank.unit(*id).expect("ranked unit exists").text)
    });
    let by_id: BTreeMap<UnitId, &FusedEntry> = fused.iter().map(|f| (f.unit_id, f)).collect();
    let items = outcome.order[..taken]
        .iter()
        .map(|id| {
            let u = bank.unit(*id).expect("ranked unit exists");
            let f = by_id[id];
            RecallItem {
                unit_id: *id,
                text: u.text.clone(),
                network: u.network,
                occurred_start: u.occurred_start,
                occurred_end: u.occurred_end,
                mentioned_at: u.mentioned_at,
                confidence: u.confidence,
                fused_score: f.score,
                rerank_score: outcome.scores.get(id).copied(),
                channels_hit: f
                    .ranks
                    .keys()
                    .copied()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
                tokens: approx_tokens(&u.text),
            }
        })
        .collect();

    Ok(RecallResult {
        items,
        total_tokens,
        budget,
        temporal_range_used: range,
        rerank_fallback: outcome.fallback,
        explain: options.explain.then(|| Explanation {
            lists,
            fused,
            reranked: outcome.order.clone(),
        }),
    })
}
