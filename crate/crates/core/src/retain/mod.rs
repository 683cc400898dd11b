//! Ingestion: transcript → facts → units, entities, links, opinion updates.

pub mod background;
pub mod entities;
pub mod links;
pub mod observations;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use background::merge_background;
pub use entities::{match_score, resolve_entity, Mention, Resolution};
pub use links::{build_links, temporal_link_weight};
pub use observations::{observations_of, refresh_observations, source_facts};

use crate::config::EngineConfig;
use crate::error::{Error, ProviderError, Result};
use crate::model::{EdgeKind, EntityId, MemoryUnit, Network, Timestamp, UnitId, UnitMetadata};
use crate::providers::{CausalRelation, EntityMention, ExtractedFact, ProviderSuite, Turn};
use crate::reflect::opinions::{reinforce_opinions, OpinionUpdate};
use crate::store::{Bank, BankHandle};
use crate::temporal::parse_temporal;
use crate::time::{dated_text, truncate_secs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainRequest {
    pub turns: Vec<Turn>,
    /// Treat the transcript as a biographical snippet and merge it into the
    /// bank's background.
    #[serde(default)]
    pub biographical: bool,
}

impl RetainRequest {
    pub fn new(turns: Vec<Turn>) -> Self {
        Self {
            turns,
            biographical: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedMention {
    pub mention: String,
    pub canonical: String,
    pub entity_id: EntityId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainReceipt {
    pub fact_ids: Vec<UnitId>,
    pub new_entities: Vec<EntityId>,
    pub merged_entities: Vec<MergedMention>,
    pub edges_created: BTreeMap<EdgeKind, usize>,
    pub opinions_updated: Vec<OpinionUpdate>,
    pub background_changed: bool,
}

/// Result of a committed retain.
#[derive(Debug, Clone)]
pub struct Retained {
    pub receipt: RetainReceipt,
    /// Entities whose observations should be regenerated.
    pub touched_entities: BTreeSet<EntityId>,
    /// The bank state published by this retain.
    pub bank: Arc<Bank>,
}

/// A fact after time normalization and embedding, ready to be stored.
#[derive(Debug, Clone)]
struct PreparedFact {
    text: String,
    context: String,
    network: Network,
    occurred: (Timestamp, Timestamp),
    mentioned_at: Timestamp,
    embedding: Vec<f64>,
    mentions: Vec<EntityMention>,
    causal: Vec<CausalRelation>,
}

fn retain_failed(e: ProviderError) -> Error {
    Error::RetainFailed(e.to_string())
}

fn validate_request(req: &RetainRequest) -> Result<()> {
    if req.turns.is_empty() {
        return Err(Error::Validation(vec!["transcript has no turns".into()]));
    }
    let violations: Vec<String> = req
        .turns
        .iter()
        .enumerate()
        .filter(|(_, t)| t.text.trim().is_empty())
        .map(|(i, _)| format!("turn {i}: empty text"))
        .collect();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(violations))
    }
}

/// Occurrence interval from explicit fields, else from the `when` phrase,
/// else the mention time.
fn occurrence(fact: &ExtractedFact, mentioned_at: Timestamp) -> (Timestamp, Timestamp) {
    match (fact.occurred_start, fact.occurred_end) {
        (Some(s), Some(e)) => (truncate_secs(s), truncate_secs(e)),
        (Some(t), None) | (None, Some(t)) => (truncate_secs(t), truncate_secs(t)),
        (None, None) => parse_temporal(&fact.when, mentioned_at)
            .ok()
            .flatten()
            .unwrap_or((mentioned_at, mentioned_at)),
    }
}

fn context_line(fact: &ExtractedFact) -> String {
    [
        ("when", &fact.when),
        ("where", &fact.where_),
        ("who", &fact.who),
        ("why", &fact.why),
    ]
    .iter()
    .filter(|(_, v)| !v.trim().is_empty())
    .map(|(k, v)| format!("{k}: {}", v.trim()))
    .collect::<Vec<_>>()
    .join("; ")
}

fn prepare(
    facts: Vec<ExtractedFact>,
    providers: &ProviderSuite,
    dim: usize,
    now: Timestamp,
) -> Result<Vec<PreparedFact>> {
    let mut out = Vec::with_capacity(facts.len());
    let mut violations = Vec::new();
    for (i, f) in facts.into_iter().enumerate() {
        let mentioned_at = f.mentioned_at.map(truncate_secs).unwrap_or(now);
        let occurred = occurrence(&f, mentioned_at);
        if occurred.0 > occurred.1 {
            violations.push(format!("fact {i}: occurrence interval is inverted"));
            continue;
        }
        let text = f.what.trim().to_string();
        let embedding = providers
            .embed(&dated_text(&text, occurred.0, occurred.1), dim)
            .map_err(retain_failed)?;
        out.push(PreparedFact {
            context: context_line(&f),
            network: Network::from(f.fact_type),
            occurred,
            mentioned_at,
            embedding,
            mentions: f.entities,
            causal: f.causal_relations,
            text,
        });
    }
    if !violations.is_empty() {
        return Err(Error::RejectedFact { violations });
    }
    Ok(out)
}

/// One mention per case-folded surface form, in first-seen order.
fn distinct_mentions(mentions: &[EntityMention]) -> Vec<EntityMention> {
    let mut seen = BTreeSet::new();
    mentions
        .iter()
        .filter(|m| seen.insert(m.text.trim().to_lowercase()))
        .cloned()
        .collect()
}

/// Runs the ingestion pipeline. Provider calls that do not depend on bank
/// state (extraction, embedding) run before the write lock is taken; the
/// rest runs on a private copy that is published only if every step
/// succeeds.
pub fn retain(
    handle: &BankHandle,
    request: &RetainRequest,
    providers: &ProviderSuite,
    config: &EngineConfig,
    now: Timestamp,
) -> Result<Retained> {
    validate_request(request)?;
    let now = truncate_secs(now);
    let facts = providers.extract(&request.turns).map_err(retain_failed)?;
    let dim = handle.snapshot().embedding_dim();
    let prepared = prepare(facts, providers, dim, now)?;

    let ((receipt, touched_entities), bank) =
        handle.write_publish(|bank| commit(bank, request, prepared, providers, config))?;
    Ok(Retained {
        receipt,
        touched_entities,
        bank,
    })
}

fn commit(
    bank: &mut Bank,
    request: &RetainRequest,
    prepared: Vec<PreparedFact>,
    providers: &ProviderSuite,
    config: &EngineConfig,
) -> Result<(RetainReceipt, BTreeSet<EntityId>)> {
    let mut new_entities = Vec::new();
    let mut merged_entities = Vec::new();
    let mut units = Vec::new();
    let mut unit_mentions = Vec::new();
    let mut causal = Vec::new();

    for fact in prepared {
        let id = bank.allocate_unit_id();
        let mentions = distinct_mentions(&fact.mentions);
        let mut resolved = BTreeSet::new();
        for m in &mentions {
            let co_mentions = mentions
                .iter()
                .filter(|o| o.text != m.text)
                .map(|o| o.text.trim().to_lowercase())
                .collect();
            let mention = Mention {
                text: m.text.trim().to_string(),
                kind: m.kind,
                co_mentions,
                at: fact.mentioned_at,
            };
            match resolve_entity(bank, &mention, config) {
                Resolution::Created(e) => {
                    new_entities.push(e);
                    resolved.insert(e);
                }
                Resolution::Matched { entity, .. } => {
                    let canonical = bank.entity(entity).expect("matched").canonical_name.clone();
                    if !canonical.eq_ignore_ascii_case(&mention.text) {
                        merged_entities.push(MergedMention {
                            mention: mention.text.clone(),
                            canonical,
                            entity_id: entity,
                        });
                    }
                    resolved.insert(entity);
                }
            }
        }
        let confidence = (fact.network == Network::Opinion).then_some(config.default_opinion_confidence);
        units.push(MemoryUnit {
            id,
            bank_id: bank.id().clone(),
            text: fact.text,
            embedding: fact.embedding,
            occurred_start: fact.occurred.0,
            occurred_end: fact.occurred.1,
            mentioned_at: fact.mentioned_at,
            network: fact.network,
            confidence,
            metadata: UnitMetadata {
                context: fact.context,
                ..UnitMetadata::default()
            },
        });
        unit_mentions.push(resolved);
        causal.push(fact.causal);
    }

    let fact_ids = bank.upsert_units(units, config).map_err(|e| match e {
        Error::Validation(violations) => Error::RejectedFact { violations },
        other => other,
    })?;
    let mut touched = BTreeSet::new();
    for (id, ents) in fact_ids.iter().zip(unit_mentions) {
        touched.extend(ents.iter().copied());
        bank.set_mentions(*id, ents);
    }

    let mut edges_created: BTreeMap<EdgeKind, usize> = EdgeKind::ALL.iter().map(|k| (*k, 0)).collect();
    for edge in build_links(bank, &fact_ids, &causal, config)? {
        let kind = edge.kind;
        if bank.insert_edge(edge)? {
            *edges_created.entry(kind).or_default() += 1;
        }
    }

    let opinions_updated = reinforce_opinions(bank, &fact_ids, providers, config)?;

    let mut background_changed = false;
    if request.biographical {
        let snippet = request
            .turns
            .iter()
            .map(|t| t.text.trim())
            .collect::<Vec<_>>()
            .join(" ");
        let mut profile = bank.profile().clone();
        let merged =
            merge_background(&profile.background, &snippet, providers, config).map_err(|e| match e {
                Error::Provider(p) => retain_failed(p),
                other => other,
            })?;
        if merged != profile.background {
            profile.background = merged;
            bank.set_profile(profile);
            background_changed = true;
        }
    }

    Ok((
        RetainReceipt {
            fact_ids,
            new_entities,
            merged_entities,
            edges_created,
            opinions_updated,
            background_changed,
        },
        touched,
    ))
}
