mod common;

use std::collections::BTreeMap;

use common::{oracle_prefix, oracle_rrf, random_bank, small_config};
use membank_core::model::UnitId;
use membank_core::providers::AssessLabel;
use membank_core::recall::channels::{graph_search, Channel, RankedEntry, RankedList};
use membank_core::recall::{pack_budget, rrf_fuse};
use membank_core::reflect::apply_confidence_update;
use membank_core::EngineConfig;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn label() -> impl Strategy<Value = AssessLabel> {
    prop_oneof![
        Just(AssessLabel::Reinforce),
        Just(AssessLabel::Weaken),
        Just(AssessLabel::Contradict),
        Just(AssessLabel::Neutral),
    ]
}

fn list(channel: Channel, ids: &[u64]) -> RankedList {
    let n = ids.len() as f64;
    RankedList {
        channel,
        entries: ids
            .iter()
            .enumerate()
            .map(|(i, id)| RankedEntry {
                unit_id: UnitId(*id),
                score: n - i as f64,
            })
            .collect(),
    }
}

/// Up to four rankings over a shared pool of unit ids, each without repeats.
fn rankings() -> impl Strategy<Value = Vec<Vec<u64>>> {
    prop::collection::vec(
        prop::collection::btree_set(0u64..30, 0..20)
            .prop_flat_map(|s| Just(s.into_iter().collect::<Vec<_>>()).prop_shuffle()),
        1..=4,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn confidence_stays_in_unit_interval(
        start in 0.0f64..=1.0,
        alpha in 0.001f64..0.999,
        labels in prop::collection::vec(label(), 0..60),
    ) {
        let mut c = start;
        for l in labels {
            let next = apply_confidence_update(c, l, alpha);
            prop_assert!((0.0..=1.0).contains(&next));
            match l {
                AssessLabel::Reinforce => prop_assert!(next >= c - 1e-12),
                AssessLabel::Neutral => prop_assert_eq!(next, c),
                _ => prop_assert!(next <= c + 1e-12),
            }
            c = next;
        }
    }

    #[test]
    fn rrf_matches_oracle_and_respects_dominance(lists in rankings(), k in 1u32..100) {
        let bank = membank_core::store::Bank::new(
            membank_core::model::BankId::new("p"),
            membank_core::model::BankProfile::new("P"),
            8,
        );
        let ranked: Vec<RankedList> = lists
            .iter()
            .zip(Channel::ALL)
            .map(|(ids, ch)| list(ch, ids))
            .collect();
        let fused = rrf_fuse(&ranked, k, &bank);
        let ids: Vec<Vec<UnitId>> = lists.iter().map(|l| l.iter().map(|i| UnitId(*i)).collect()).collect();
        let oracle = oracle_rrf(&ids, k);
        prop_assert_eq!(fused.len(), oracle.len());
        for f in &fused {
            prop_assert!((f.score - oracle[&f.unit_id]).abs() < 1e-12);
        }
        for w in fused.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
        // A unit ranked at least as well in every list, and strictly better
        // in one, never fuses below the other.
        let rank: Vec<BTreeMap<u64, usize>> = lists
            .iter()
            .map(|l| l.iter().enumerate().map(|(i, id)| (*id, i + 1)).collect())
            .collect();
        let score = |id: UnitId| fused.iter().find(|f| f.unit_id == id).map(|f| f.score);
        for a in &fused {
            for b in &fused {
                let dominates = rank.iter().all(|r| match (r.get(&a.unit_id.0), r.get(&b.unit_id.0)) {
                    (Some(x), Some(y)) => x <= y,
                    (Some(_), None) | (None, None) => true,
                    (None, Some(_)) => false,
                }) && a.unit_id != b.unit_id;
                if dominates {
                    prop_assert!(score(a.unit_id) >= score(b.unit_id));
                }
            }
        }
    }

    #[test]
    fn budget_takes_the_maximal_prefix(
        sizes in prop::collection::vec(0usize..200, 0..40),
        budget in 0usize..2000,
    ) {
        let (taken, total) = pack_budget(&sizes, budget, |s| *s);
        prop_assert_eq!((taken, total), oracle_prefix(&sizes, budget));
        prop_assert!(total <= budget);
        prop_assert_eq!(total, sizes[..taken].iter().sum::<usize>());
        if taken < sizes.len() {
            prop_assert!(total + sizes[taken] > budget);
        }
    }

    #[test]
    fn graph_activation_grows_with_decay(seed in any::<u64>(), lo in 0.05f64..0.95, gap in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = small_config();
        let bank = random_bank(&mut rng, 40, &cfg);
        let entries: Vec<RankedEntry> = bank
            .units()
            .take(3)
            .enumerate()
            .map(|(i, u)| RankedEntry { unit_id: u.id, score: 0.9 - 0.2 * i as f64 })
            .collect();
        let run = |delta: f64| -> BTreeMap<UnitId, f64> {
            let c = EngineConfig { activation_decay: delta, ..cfg.clone() };
            graph_search(&entries, &bank, &c)
                .entries
                .into_iter()
                .map(|e| (e.unit_id, e.score))
                .collect()
        };
        let low = run(lo);
        let high = run((lo + gap).min(0.99));
        for (id, a) in &low {
            let b = high.get(id).copied();
            prop_assert!(b.is_some(), "{id} reachable at lower decay only");
            prop_assert!(b.unwrap() >= *a - 1e-12, "{id}: {a} > {}", b.unwrap());
        }
    }

    #[test]
    fn graph_reach_grows_with_hops(seed in any::<u64>(), hops in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = small_config();
        let bank = random_bank(&mut rng, 40, &cfg);
        let entries: Vec<RankedEntry> = bank
            .units()
            .take(2)
            .map(|u| RankedEntry { unit_id: u.id, score: 0.8 })
            .collect();
        let reach = |h: usize| -> Vec<UnitId> {
            let c = EngineConfig { max_hops: h, ..cfg.clone() };
            graph_search(&entries, &bank, &c).ids()
        };
        let near = reach(hops);
        let far = reach(hops + 1);
        for id in &near {
            prop_assert!(far.contains(id));
        }
    }
}
