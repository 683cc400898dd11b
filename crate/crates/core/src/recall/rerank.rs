use std::collections::BTreeMap;

use super::channels::rank_order;
use crate::model::{MemoryUnit, UnitId};
use crate::providers::ProviderSuite;
use crate::store::Bank;
use crate::time::dated_text;

#[derive(Debug, Clone, PartialEq)]
pub struct RerankOutcome {
    pub order: Vec<UnitId>,
    pub scores: BTreeMap<UnitId, f64>,
    /// True when the provider failed and the fused order was kept.
    pub fallback: bool,
}

/// Candidate text as the reranker sees it: `[<time reference>] <text>`.
pub fn rerank_input(unit: &MemoryUnit) -> String {
    dated_text(&unit.text, unit.occurred_start, unit.occurred_end)
}

/// Rescores the first `window` fused candidates; the rest keep their fused
/// order after them. Equal scores fall back to the engine-wide tie-break.
pub fn rerank(
    query: &str,
    fused: &[UnitId],
    bank: &Bank,
    providers: &ProviderSuite,
    window: usize,
) -> RerankOutcome {
    let cut = window.min(fused.len());
    let (head, tail) = fused.split_at(cut);
    let inputs: Vec<String> = head
        .iter()
        .map(|id| rerank_input(bank.unit(*id).expect("fused unit exists")))
        .collect();
    if inputs.is_empty() {
        return RerankOutcome {
            order: fused.to_vec(),
            scores: BTreeMap::new(),
            fallback: false,
        };
    }
    match providers.rerank(query, &inputs) {
        Ok(scores) => {
            let mut keyed: Vec<_> = head
                .iter()
                .zip(&scores)
                .map(|(id, s)| (*s, bank.mentioned_at(*id).unwrap_or_default(), *id))
                .collect();
            keyed.sort_by(|a, b| rank_order(*a, *b));
            let mut order: Vec<UnitId> = keyed.iter().map(|k| k.2).collect();
            order.extend_from_slice(tail);
            RerankOutcome {
                order,
                scores: head.iter().copied().zip(scores).collect(),
                fallback: false,
            }
        }
        Err(err) => {
            tracing::warn!(error = %err, "reranker failed; keeping fused order");
            RerankOutcome {
                order: fused.to_vec(),
                scores: BTreeMap::new(),
                fallback: true,
            }
        }
    }
}
