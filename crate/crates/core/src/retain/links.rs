//! Construction of the four edge kinds for newly stored units.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::model::{Edge, EdgeKey, Network, UnitId};
use crate::providers::CausalRelation;
use crate::store::{cosine, Bank};

/// `exp(-|t_i - t_j| / sigma_t)` with times and `sigma_t` in seconds.
pub fn temporal_link_weight(t_i: f64, t_j: f64, sigma_t: f64) -> Result<f64> {
    if !sigma_t.is_finite() || sigma_t <= 0.0 {
        return Err(Error::Config(format!("sigma_t must be positive, got {sigma_t}")));
    }
    Ok((-(t_i - t_j).abs() / sigma_t).exp())
}

fn temporally_linked(network: Network, config: &EngineConfig) -> bool {
    network != Network::Opinion || config.temporal_links_include_opinions
}

/// Edges for `new_units`, which must already be stored with their mentions.
///
/// * entity: both orientations between every pair sharing a canonical
///   entity, tagged with the lowest shared entity id;
/// * temporal: both orientations between units whose occurrence midpoints
///   lie within `temporal_window_sigmas * sigma_t`;
/// * semantic: both orientations to the nearest `channel_pool_size`
///   neighbours with cosine `>= theta_s`, weight = cosine;
/// * causal: directed, from `causal[i]` of `new_units[i]` to the batch unit
///   it targets.
///
/// The result is deduplicated by `(source, target, kind)`.
pub fn build_links(
    bank: &Bank,
    new_units: &[UnitId],
    causal: &[Vec<CausalRelation>],
    config: &EngineConfig,
) -> Result<Vec<Edge>> {
    let mut out: BTreeMap<EdgeKey, Edge> = BTreeMap::new();
    let mut add = |e: Edge| {
        out.entry(e.key()).or_insert(e);
    };
    let window = config.temporal_window_sigmas * config.sigma_t;

    for &id in new_units {
        let unit = bank
            .unit(id)
            .ok_or_else(|| Error::InvalidInput(format!("unit {id} is not stored")))?;

        let mine = bank.mentions_of(id);
        let mut partners: BTreeSet<UnitId> = BTreeSet::new();
        for e in mine {
            partners.extend(bank.units_mentioning(*e).iter().copied());
        }
        partners.remove(&id);
        for other in partners {
            let shared = mine
                .intersection(bank.mentions_of(other))
                .next()
                .copied()
                .expect("partner shares an entity");
            add(Edge::entity(id, other, shared));
            add(Edge::entity(other, id, shared));
        }

        if temporally_linked(unit.network, config) {
            let mid = unit.occurred_midpoint();
            for other in bank.units() {
                if other.id == id || !temporally_linked(other.network, config) {
                    continue;
                }
                let delta = (other.occurred_midpoint() - mid).abs();
                if delta <= window {
                    let w = temporal_link_weight(mid, other.occurred_midpoint(), config.sigma_t)?;
                    add(Edge::temporal(id, other.id, w));
                    add(Edge::temporal(other.id, id, w));
                }
            }
        }

        let mut near: Vec<(UnitId, f64)> = bank
            .vectors()
            .scores(&unit.embedding)
            .filter(|(other, _)| *other != id)
            .collect();
        near.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (other, _) in near.into_iter().take(config.channel_pool_size) {
            let embedding = &bank.unit(other).expect("indexed unit exists").embedding;
            let sim = cosine(&unit.embedding, embedding);
            if sim >= config.theta_s {
                let w = sim.min(1.0);
                add(Edge::semantic(id, other, w));
                add(Edge::semantic(other, id, w));
            }
        }
    }

    for (i, relations) in causal.iter().enumerate() {
        for r in relations {
            let (Some(&src), Some(&dst)) = (new_units.get(i), new_units.get(r.target_fact_index)) else {
                return Err(Error::RejectedFact {
                    violations: vec![format!(
                        "fact {i}: causal target {} outside batch of {}",
                        r.target_fact_index,
                        new_units.len()
                    )],
                });
            };
            add(Edge::causal(src, dst, r.relation_type));
        }
    }

    Ok(out.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BankId, BankProfile, CausalKind, EdgeKind, EntityId, MemoryUnit, UnitMetadata};
    use crate::time::parse_timestamp;
    use proptest::prelude::*;

    fn cfg() -> EngineConfig {
        EngineConfig {
            embedding_dim: 2,
            ..Default::default()
        }
    }

    fn store(bank: &mut Bank, embedding: Vec<f64>, day: u32) -> UnitId {
        let t = parse_timestamp(&format!("2024-06-{day:02}T00:00:00Z")).unwrap();
        let id = bank.allocate_unit_id();
        bank.upsert_units(
            vec![MemoryUnit {
                id,
                bank_id: bank.id().clone(),
                text: format!("unit {}", id.0),
                embedding,
                occurred_start: t,
                occurred_end: t,
                mentioned_at: t,
                network: Network::World,
                confidence: None,
                metadata: UnitMetadata::default(),
            }],
            &cfg(),
        )
        .unwrap();
        id
    }

    fn bank() -> Bank {
        Bank::new(BankId::new("b"), BankProfile::new("a"), 2)
    }

    fn of_kind(edges: &[Edge], kind: EdgeKind) -> Vec<&Edge> {
        edges.iter().filter(|e| e.kind == kind).collect()
    }

    #[test]
    fn temporal_weight_values() {
        let s = 100.0;
        assert_eq!(temporal_link_weight(5.0, 5.0, s).unwrap(), 1.0);
        assert!((temporal_link_weight(0.0, s, s).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(temporal_link_weight(0.0, 1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn temporal_weight_decreases(a in 0.0f64..1e6, b in 0.0f64..1e6, s in 1.0f64..1e6) {
            let (d1, d2) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(d1 < d2);
            let w1 = temporal_link_weight(0.0, d1, s).unwrap();
            let w2 = temporal_link_weight(0.0, d2, s).unwrap();
            prop_assert!(w1 >= w2);
            prop_assert!(w2 > 0.0 && w1 <= 1.0);
        }
    }

    #[test]
    fn shared_entity_links_both_ways() {
        let mut b = bank();
        let u1 = store(&mut b, vec![1.0, 0.0], 1);
        let u2 = store(&mut b, vec![0.0, 1.0], 28);
        b.set_mentions(u1, [EntityId(1)].into());
        b.set_mentions(u2, [EntityId(1)].into());
        let edges = build_links(&b, &[u2], &[], &cfg()).unwrap();
        let ent = of_kind(&edges, EdgeKind::Entity);
        assert_eq!(ent.len(), 2);
        assert!(ent
            .iter()
            .all(|e| e.weight == 1.0 && e.entity_id == Some(EntityId(1))));
    }

    #[test]
    fn semantic_threshold_is_inclusive() {
        let mut b = bank();
        let c = EngineConfig {
            theta_s: 0.8,
            ..cfg()
        };
        store(&mut b, vec![1.0, 0.0], 1);
        // cos = 0.8 exactly: (0.8, 0.6) is a unit vector.
        let at = store(&mut b, vec![0.8, 0.6], 1);
        let edges = build_links(&b, &[at], &[], &c).unwrap();
        let sem = of_kind(&edges, EdgeKind::Semantic);
        assert_eq!(sem.len(), 2);
        assert!((sem[0].weight - 0.8).abs() < 1e-12);

        let mut b = bank();
        store(&mut b, vec![1.0, 0.0], 1);
        let below = store(&mut b, vec![0.79, (1.0f64 - 0.79 * 0.79).sqrt()], 1);
        let edges = build_links(&b, &[below], &[], &c).unwrap();
        assert!(of_kind(&edges, EdgeKind::Semantic).is_empty());
    }

    #[test]
    fn temporal_window_bounds_edges() {
        let mut b = bank();
        let c = EngineConfig {
            sigma_t: 86_400.0,
            ..cfg()
        };
        let a = store(&mut b, vec![1.0, 0.0], 1);
        let near = store(&mut b, vec![0.0, 1.0], 3);
        let far = store(&mut b, vec![0.0, 1.0], 10);
        let edges = build_links(&b, &[a], &[], &c).unwrap();
        let temporal = of_kind(&edges, EdgeKind::Temporal);
        assert!(temporal.iter().any(|e| e.target == near));
        assert!(temporal.iter().all(|e| e.target != far && e.source != far));
        let w = temporal.iter().find(|e| e.target == near).unwrap().weight;
        assert!((w - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn causal_edge_is_directed() {
        let mut b = bank();
        let ids: Vec<UnitId> = (0..3).map(|i| store(&mut b, vec![1.0, i as f64], 1)).collect();
        let causal = vec![
            vec![CausalRelation {
                target_fact_index: 2,
                relation_type: CausalKind::Causes,
                strength: 0.9,
            }],
            vec![],
            vec![],
        ];
        let edges = build_links(&b, &ids, &causal, &cfg()).unwrap();
        let c = of_kind(&edges, EdgeKind::Causal);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].source, c[0].target, c[0].weight), (ids[0], ids[2], 1.0));
        assert_eq!(c[0].causal_subtype, Some(CausalKind::Causes));

        let bad = vec![vec![CausalRelation {
            target_fact_index: 5,
            relation_type: CausalKind::Causes,
            strength: 0.5,
        }]];
        assert!(matches!(
            build_links(&b, &ids, &bad, &cfg()),
            Err(Error::RejectedFact { .. })
        ));
    }
}
