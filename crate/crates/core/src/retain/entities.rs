//! Entity resolution: map a surface mention to a canonical entity.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::model::{Entity, EntityId, EntityKind, Timestamp};
use crate::store::Bank;
use crate::text::string_similarity;

/// A mention together with the evidence used to resolve it.
#[derive(Debug, Clone, PartialEq)]
pub struct Mention {
    pub text: String,
    pub kind: EntityKind,
    /// Case-folded texts of the other mentions in the same fact.
    pub co_mentions: BTreeSet<String>,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Resolution {
    Created(EntityId),
    Matched { entity: EntityId, score: f64 },
}

impl Resolution {
    pub fn entity(&self) -> EntityId {
        match self {
            Resolution::Created(e) => *e,
            Resolution::Matched { entity, .. } => *entity,
        }
    }
}

/// Jaccard overlap; two empty sets share no evidence.
pub fn co_occurrence_similarity(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Weighted match score of `mention` against `entity`.
pub fn match_score(mention: &Mention, entity: &Entity, config: &EngineConfig) -> f64 {
    let w = &config.entity_weights;
    let dt = (mention.at - entity.last_mentioned).num_seconds().unsigned_abs() as f64;
    w.string * string_similarity(&mention.text, &entity.canonical_name)
        + w.co_occurrence * co_occurrence_similarity(&mention.co_mentions, &entity.co_mentions)
        + w.temporal * (-dt / config.sigma_t).exp()
}

/// Resolves `mention` against entities of the same kind, creating a new
/// entity when no candidate reaches the match threshold. The chosen entity's
/// mention count, last-mention time and co-mention set are updated.
///
/// Ties on score go to the lower entity id.
pub fn resolve_entity(bank: &mut Bank, mention: &Mention, config: &EngineConfig) -> Resolution {
    let best = bank
        .entities()
        .filter(|e| e.kind == mention.kind)
        .map(|e| (e.id, match_score(mention, e, config)))
        .fold(None::<(EntityId, f64)>, |acc, (id, s)| match acc {
            Some((_, best)) if best >= s => acc,
            _ => Some((id, s)),
        });

    match best {
        Some((id, score)) if score >= config.entity_match_threshold => {
            let e = bank.entity_mut(id).expect("candidate came from the registry");
            e.mention_count += 1;
            e.last_mentioned = e.last_mentioned.max(mention.at);
            e.co_mentions.extend(mention.co_mentions.iter().cloned());
            Resolution::Matched { entity: id, score }
        }
        _ => {
            let id = bank.allocate_entity_id();
            bank.insert_entity(Entity {
                id,
                canonical_name: mention.text.trim().to_string(),
                kind: mention.kind,
                mention_count: 1,
                last_mentioned: mention.at,
                co_mentions: mention.co_mentions.clone(),
            });
            Resolution::Created(id)
        }
    }
}
