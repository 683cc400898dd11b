//! Profile-conditioned answering with opinion formation.

pub mod opinions;
pub mod profile;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use opinions::{
    apply_confidence_update, apply_confidence_update_named, find_candidate_opinions, reinforce_opinions,
    OpinionUpdate,
};
pub use profile::{bias_clause, verbalize_profile};

use crate::config::EngineConfig;
use crate::error::Result;
use crate::model::{MemoryUnit, Network, Opinion, Timestamp, UnitId, UnitMetadata};
use crate::providers::{AssessLabel, CandidateOpinion, EntityMention, ProviderSuite, ReflectRequest};
use crate::recall::{recall, RecallItem, RecallOptions};
use crate::retain::{build_links, resolve_entity, Mention};
use crate::store::BankHandle;
use crate::text::is_first_person;
use crate::time::{dated_text, time_reference, truncate_secs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedOpinion {
    pub candidate: CandidateOpinion,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectResult {
    pub response_text: String,
    pub opinions_formed: Vec<Opinion>,
    pub opinions_updated: Vec<OpinionUpdate>,
    pub opinions_dropped: Vec<DroppedOpinion>,
    pub memories_used: Vec<UnitId>,
    pub system_message_used: String,
}

/// How a recalled memory is shown to the synthesizer.
pub fn memory_line(item: &RecallItem) -> String {
    let when = time_reference(item.occurred_start, item.occurred_end);
    match (item.network, item.confidence) {
        (Network::Opinion, Some(c)) => format!("[{when}] (my opinion, confidence {c:.2}) {}", item.text),
        (network, _) => format!("[{when}] ({}) {}", network.as_str(), item.text),
    }
}

/// Checks a candidate and fills in the default confidence.
pub fn validate_candidate(c: &CandidateOpinion, config: &EngineConfig) -> Result<(String, f64), String> {
    let text = c.opinion.trim();
    if text.is_empty() {
        return Err("empty opinion text".into());
    }
    if !is_first_person(text) {
        return Err("opinion is not a first-person statement".into());
    }
    let confidence = c.confidence.unwrap_or(config.default_opinion_confidence);
    if !confidence.is_finite() || !(0.0..=1.0).contains(&confidence) {
        return Err(format!("confidence {confidence} outside [0,1]"));
    }
    Ok((text.to_string(), confidence))
}

struct NewOpinion {
    text: String,
    confidence: f64,
    embedding: Vec<f64>,
    mentions: Vec<EntityMention>,
}

pub fn reflect(
    handle: &BankHandle,
    query: &str,
    providers: &ProviderSuite,
    config: &EngineConfig,
    now: Timestamp,
) -> Result<ReflectResult> {
    let now = truncate_secs(now);
    let snapshot = handle.snapshot();
    let recalled = recall(
        &snapshot,
        query,
        config.reflect_budget_tokens,
        providers,
        config,
        now,
        RecallOptions::default(),
    )?;
    let system_message = verbalize_profile(snapshot.profile());
    let request = ReflectRequest {
        system_message: system_message.clone(),
        query: query.to_string(),
        memories: recalled.items.iter().map(memory_line).collect(),
    };
    let output = providers.reflect(&request)?;

    let mut dropped = Vec::new();
    let mut accepted = Vec::new();
    let mut seen = BTreeSet::new();
    for c in output.opinions {
        match validate_candidate(&c, config) {
            Ok((text, confidence)) => {
                if !seen.insert(text.to_lowercase()) {
                    dropped.push(DroppedOpinion {
                        candidate: c,
                        reason: "duplicate of another candidate".into(),
                    });
                    continue;
                }
                let embedding = providers.embed(&dated_text(&text, now, now), snapshot.embedding_dim())?;
                let mentions = providers.mentions(&text)?;
                accepted.push(NewOpinion {
                    text,
                    confidence,
                    embedding,
                    mentions,
                });
            }
            Err(reason) => {
                tracing::warn!(%reason, "dropping opinion candidate");
                dropped.push(DroppedOpinion { candidate: c, reason });
            }
        }
    }

    let (formed, updated) = if accepted.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        handle.write(|bank| {
            let mut formed_ids = Vec::new();
            let mut updated = Vec::new();
            for op in accepted {
                let existing = bank
                    .opinions()
                    .into_iter()
                    .find(|o| o.text.trim().eq_ignore_ascii_case(&op.text));
                if let Some(o) = existing {
                    let new_c =
                        apply_confidence_update(o.confidence, AssessLabel::Reinforce, config.opinion_alpha);
                    let mut unit = bank.unit(o.unit_id).expect("opinion exists").clone();
                    unit.confidence = Some(new_c);
                    bank.update_unit(unit, config)?;
                    updated.push(OpinionUpdate {
                        opinion_id: o.unit_id,
                        old_confidence: o.confidence,
                        new_confidence: new_c,
                        label: AssessLabel::Reinforce,
                        revised_text: None,
                    });
                    continue;
                }
                let id = bank.allocate_unit_id();
                let unit = MemoryUnit {
                    id,
                    bank_id: bank.id().clone(),
                    text: op.text,
                    embedding: op.embedding,
                    occurred_start: now,
                    occurred_end: now,
                    mentioned_at: now,
                    network: Network::Opinion,
                    confidence: Some(op.confidence),
                    metadata: UnitMetadata::default(),
                };
                bank.upsert_units(vec![unit], config)?;
                let names: BTreeSet<String> =
                    op.mentions.iter().map(|m| m.text.trim().to_lowercase()).collect();
                let mut ents = BTreeSet::new();
                for m in &op.mentions {
                    let mut co = names.clone();
                    co.remove(&m.text.trim().to_lowercase());
                    let mention = Mention {
                        text: m.text.trim().to_string(),
                        kind: m.kind,
                        co_mentions: co,
                        at: now,
                    };
                    ents.insert(resolve_entity(bank, &mention, config).entity());
                }
                bank.set_mentions(id, ents);
                for edge in build_links(bank, &[id], &[], config)? {
                    bank.insert_edge(edge)?;
                }
                formed_ids.push(id);
            }
            let all = bank.opinions();
            let formed = formed_ids
                .iter()
                .filter_map(|id| all.iter().find(|o| o.unit_id == *id).cloned())
                .collect::<Vec<_>>();
            Ok((formed, updated))
        })?
    };

    Ok(ReflectResult {
        response_text: output.response,
        opinions_formed: formed,
        opinions_updated: updated,
        opinions_dropped: dropped,
        memories_used: recalled.ids(),
        system_message_used: system_message,
    })
}
