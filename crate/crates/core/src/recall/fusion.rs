use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::channels::{rank_order, Channel, RankedList};
use crate::model::UnitId;
use crate::store::Bank;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedEntry {
    pub unit_id: UnitId,
    pub score: f64,
    /// 1-based rank in each list that contains the unit.
    pub ranks: BTreeMap<Channel, usize>,
}

/// Reciprocal rank fusion of one unit's ranks: `Σ 1 / (k + r)`.
pub fn rrf_score(ranks: impl IntoIterator<Item = usize>, k: u32) -> f64 {
    ranks.into_iter().map(|r| 1.0 / (f64::from(k) + r as f64)).sum()
}

/// Fuses ranked lists by reciprocal rank. Lists are summed in the order
/// given; absent lists contribute nothing.
pub fn rrf_fuse(lists: &[RankedList], k: u32, bank: &Bank) -> Vec<FusedEntry> {
    let mut ranks: BTreeMap<UnitId, BTreeMap<Channel, usize>> = BTreeMap::new();
    let mut scores: BTreeMap<UnitId, f64> = BTreeMap::new();
    for list in lists {
        for (i, e) in list.entries.iter().enumerate() {
            ranks.entry(e.unit_id).or_default().insert(list.channel, i + 1);
            *scores.entry(e.unit_id).or_default() += 1.0 / (f64::from(k) + (i + 1) as f64);
        }
    }
    let mut out: Vec<FusedEntry> = scores
        .into_iter()
        .map(|(unit_id, score)| FusedEntry {
            unit_id,
            score,
            ranks: ranks.remove(&unit_id).unwrap_or_default(),
        })
        .collect();
    out.sort_by(|a, b| {
        let ta = bank.mentioned_at(a.unit_id).unwrap_or_default();
        let tb = bank.mentioned_at(b.unit_id).unwrap_or_default();
        rank_order((a.score, ta, a.unit_id), (b.score, tb, b.unit_id))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert!((rrf_score([1, 1], 60) - 2.0 / 61.0).abs() < 1e-15);
        assert!((2.0f64 / 61.0 - 0.032787).abs() < 1e-6);
        let f = rrf_score([1], 60);
        let g = rrf_score([2, 2, 2], 60);
        assert!(f < g);
        assert!((g - 3.0 / 62.0).abs() < 1e-15);
    }
}
