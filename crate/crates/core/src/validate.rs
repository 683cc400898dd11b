use serde::Serialize;

use crate::config::EngineConfig;
use crate::model::{MemoryUnit, Network};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    EmptyText,
    InvertedInterval,
    ConfidenceOnNonOpinion,
    MissingOpinionConfidence,
    ConfidenceOutOfRange,
    EmbeddingDimension { expected: usize, found: usize },
    NonFiniteEmbedding,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EmptyText => f.write_str("empty text"),
            Violation::InvertedInterval => f.write_str("occurred_start after occurred_end"),
            Violation::ConfidenceOnNonOpinion => f.write_str("confidence on non-opinion"),
            Violation::MissingOpinionConfidence => f.write_str("opinion without confidence"),
            Violation::ConfidenceOutOfRange => f.write_str("confidence outside [0,1]"),
            Violation::EmbeddingDimension { expected, found } => {
                write!(f, "embedding dimension {found}, expected {expected}")
            }
            Violation::NonFiniteEmbedding => f.write_str("non-finite embedding component"),
        }
    }
}

/// Lists every invariant the unit breaks; an empty report means valid.
pub fn validate_unit(unit: &MemoryUnit, config: &EngineConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if unit.text.trim().is_empty() {
        out.push(Violation::EmptyText);
    }
    if unit.occurred_start > unit.occurred_end {
        out.push(Violation::InvertedInterval);
    }
    match (unit.network, unit.confidence) {
        (Network::Opinion, None) => out.push(Violation::MissingOpinionConfidence),
        (Network::Opinion, Some(c)) if !(0.0..=1.0).contains(&c) => out.push(Violation::ConfidenceOutOfRange),
        (Network::Opinion, Some(_)) | (_, None) => {}
        (_, Some(_)) => out.push(Violation::ConfidenceOnNonOpinion),
    }
    if unit.embedding.len() != config.embedding_dim {
        out.push(Violation::EmbeddingDimension {
            expected: config.embedding_dim,
            found: unit.embedding.len(),
        });
    }
    if unit.embedding.iter().any(|x| !x.is_finite()) {
        out.push(Violation::NonFiniteEmbedding);
    }
    out
}
