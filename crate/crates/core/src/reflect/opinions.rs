//! Opinion confidence dynamics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::Result;
use crate::model::{EntityId, MemoryUnit, Network, Opinion, UnitId};
use crate::providers::{AssessLabel, ProviderSuite};
use crate::store::{cosine, Bank};
use crate::text::is_first_person;
use crate::time::dated_text;

/// Confidences are kept on a 1e-12 grid so that repeated steps of a decimal
/// `alpha` land on the values a reader computes by hand.
fn quantize(c: f64) -> f64 {
    (c * 1e12).round() / 1e12
}

/// The four-case update rule.
pub fn apply_confidence_update(c: f64, label: AssessLabel, alpha: f64) -> f64 {
    let next = match label {
        AssessLabel::Reinforce => (c + alpha).min(1.0),
        AssessLabel::Weaken => (c - alpha).max(0.0),
        AssessLabel::Contradict => (c - 2.0 * alpha).max(0.0),
        AssessLabel::Neutral => return c,
    };
    quantize(next).clamp(0.0, 1.0)
}

/// Parses a label name and applies the rule; unknown labels are an error.
pub fn apply_confidence_update_named(c: f64, label: &str, alpha: f64) -> Result<f64> {
    let label: AssessLabel = label.parse().map_err(crate::error::Error::InvalidInput)?;
    Ok(apply_confidence_update(c, label, alpha))
}

/// Opinions sharing an entity with the fact, or with cosine strictly above
/// `theta`. Sorted by unit id.
pub fn find_candidate_opinions(
    fact_embedding: &[f64],
    fact_entities: &BTreeSet<EntityId>,
    bank: &Bank,
    theta: f64,
) -> Vec<Opinion> {
    bank.opinions()
        .into_iter()
        .filter(|o| {
            !o.entities.is_disjoint(fact_entities) || {
                let v = &bank.unit(o.unit_id).expect("opinion unit exists").embedding;
                cosine(v, fact_embedding) > theta
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpinionUpdate {
    pub opinion_id: UnitId,
    pub old_confidence: f64,
    pub new_confidence: f64,
    pub label: AssessLabel,
    /// Present when a contradiction produced an accepted text revision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_text: Option<String>,
}

/// Assesses each new fact, in order, against the opinions that existed
/// before it, and applies the confidence rule. Neutral outcomes are not
/// recorded. A failed assessment skips that pair.
pub fn reinforce_opinions(
    bank: &mut Bank,
    new_facts: &[UnitId],
    providers: &ProviderSuite,
    config: &EngineConfig,
) -> Result<Vec<OpinionUpdate>> {
    let batch: BTreeSet<UnitId> = new_facts.iter().copied().collect();
    let mut updates = Vec::new();
    for &fid in new_facts {
        let Some(fact) = bank.unit(fid).cloned() else {
            continue;
        };
        if fact.network == Network::Opinion {
            continue;
        }
        let entities = bank.mentions_of(fid).clone();
        let candidates = find_candidate_opinions(&fact.embedding, &entities, bank, config.opinion_theta);
        for op in candidates.into_iter().filter(|o| !batch.contains(&o.unit_id)) {
            let label = match providers.assess(&op.text, &fact.text) {
                Ok(l) => l,
                Err(err) => {
                    tracing::warn!(opinion = %op.unit_id, fact = %fid, error = %err, "assessment skipped");
                    continue;
                }
            };
            if label == AssessLabel::Neutral {
                continue;
            }
            let new_c = apply_confidence_update(op.confidence, label, config.opinion_alpha);
            let mut unit = bank.unit(op.unit_id).expect("candidate exists").clone();
            unit.confidence = Some(new_c);

            let mut revised_text = None;
            if label == AssessLabel::Contradict {
                match revise(&unit, &fact.text, providers, bank.embedding_dim()) {
                    Ok(Some((text, embedding))) => {
                        unit.text = text.clone();
                        unit.embedding = embedding;
                        unit.metadata.revision += 1;
                        revised_text = Some(text);
                    }
                    Ok(None) => {}
                    Err(err) => {
                        tracing::warn!(opinion = %op.unit_id, error = %err, "opinion revision skipped")
                    }
                }
            }
            bank.update_unit(unit, config)?;
            updates.push(OpinionUpdate {
                opinion_id: op.unit_id,
                old_confidence: op.confidence,
                new_confidence: new_c,
                label,
                revised_text,
            });
        }
    }
    Ok(updates)
}

fn revise(
    opinion: &MemoryUnit,
    fact: &str,
    providers: &ProviderSuite,
    dim: usize,
) -> Result<Option<(String, Vec<f64>)>> {
    let text = providers.revise_opinion(&opinion.text, fact)?;
    let text = text.trim().to_string();
    if text.is_empty() || !is_first_person(&text) {
        return Ok(None);
    }
    let dated = dated_text(&text, opinion.occurred_start, opinion.occurred_end);
    let embedding = providers.embed(&dated, dim)?;
    Ok(Some((text, embedding)))
}
