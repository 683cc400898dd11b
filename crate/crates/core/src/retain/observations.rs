//! Entity observations: synthesized, confidence-free summaries of the
//! world and experience facts that mention an entity.

use std::collections::BTreeSet;

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::model::{EdgeKind, EntityId, MemoryUnit, Network, Timestamp, UnitId, UnitMetadata};
use crate::providers::ProviderSuite;
use crate::store::Bank;
use crate::time::dated_text;

use super::links::build_links;

/// Observation units currently summarizing `entity`.
pub fn observations_of(bank: &Bank, entity: EntityId) -> Vec<UnitId> {
    bank.units_in(Network::Observation)
        .filter(|u| u.metadata.subject_entity == Some(entity))
        .map(|u| u.id)
        .collect()
}

/// Facts mentioning `entity` in the world and experience networks, in
/// occurrence order.
pub fn source_facts(bank: &Bank, entity: EntityId) -> Vec<&MemoryUnit> {
    let mut facts: Vec<&MemoryUnit> = bank
        .units_mentioning(entity)
        .iter()
        .filter_map(|id| bank.unit(*id))
        .filter(|u| matches!(u.network, Network::World | Network::Experience))
        .collect();
    facts.sort_by_key(|u| (u.occurred_start, u.id));
    facts
}

/// Replaces the observation units of `entity`. Provider calls happen before
/// any mutation, so on failure the previous observations stay in place.
pub fn refresh_observations(
    bank: &mut Bank,
    entity: EntityId,
    providers: &ProviderSuite,
    config: &EngineConfig,
    now: Timestamp,
) -> Result<Vec<UnitId>> {
    let Some(e) = bank.entity(entity) else {
        return Err(Error::InvalidInput(format!("unknown entity {entity}")));
    };
    let name = e.canonical_name.clone();
    let facts = source_facts(bank, entity);

    let mut fresh = Vec::new();
    if !facts.is_empty() {
        let texts: Vec<String> = facts.iter().map(|u| u.text.clone()).collect();
        let start = facts.iter().map(|u| u.occurred_start).min().expect("non-empty");
        let end = facts.iter().map(|u| u.occurred_end).max().expect("non-empty");
        let mut seen = BTreeSet::new();
        for text in providers.observations(&name, &texts)? {
            let text = text.trim().to_string();
            if text.is_empty() || !seen.insert(text.to_lowercase()) {
                continue;
            }
            let embedding = providers.embed(&dated_text(&text, start, end), bank.embedding_dim())?;
            fresh.push((text, embedding, start, end));
        }
    }

    for old in observations_of(bank, entity) {
        bank.remove_unit(old);
    }
    let mut units = Vec::new();
    for (text, embedding, start, end) in fresh {
        units.push(MemoryUnit {
            id: bank.allocate_unit_id(),
            bank_id: bank.id().clone(),
            text,
            embedding,
            occurred_start: start,
            occurred_end: end,
            mentioned_at: now,
            network: Network::Observation,
            confidence: None,
            metadata: UnitMetadata {
                subject_entity: Some(entity),
                ..UnitMetadata::default()
            },
        });
    }
    let ids = bank.upsert_units(units, config)?;
    for id in &ids {
        bank.set_mentions(*id, BTreeSet::from([entity]));
    }
    for edge in build_links(bank, &ids, &[], config)? {
        debug_assert!(edge.kind != EdgeKind::Causal);
        bank.insert_edge(edge)?;
    }
    Ok(ids)
}
