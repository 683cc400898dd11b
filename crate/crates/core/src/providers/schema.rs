//! Structured provider I/O: the records external models must produce.

use serde::{Deserialize, Serialize};

use crate::model::{CausalKind, EntityKind, Network, Timestamp};

/// One conversational turn of input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub text: String,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactType {
    World,
    Experience,
    Opinion,
}

impl From<FactType> for Network {
    fn from(t: FactType) -> Self {
        match t {
            FactType::World => Network::World,
            FactType::Experience => Network::Experience,
            FactType::Opinion => Network::Opinion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub text: String,
    #[serde(default = "default_kind")]
    pub kind: EntityKind,
}

fn default_kind() -> EntityKind {
    EntityKind::Other
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalRelation {
    pub target_fact_index: usize,
    pub relation_type: CausalKind,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedFact {
    pub what: String,
    pub when: String,
    #[serde(rename = "where", default)]
    pub where_: String,
    pub who: String,
    pub why: String,
    pub fact_type: FactType,
    #[serde(default)]
    pub occurred_start: Option<Timestamp>,
    #[serde(default)]
    pub occurred_end: Option<Timestamp>,
    #[serde(default)]
    pub mentioned_at: Option<Timestamp>,
    #[serde(default)]
    pub entities: Vec<EntityMention>,
    #[serde(default)]
    pub causal_relations: Vec<CausalRelation>,
}

impl ExtractedFact {
    pub fn new(what: impl Into<String>, fact_type: FactType) -> Self {
        Self {
            what: what.into(),
            when: String::new(),
            where_: String::new(),
            who: String::new(),
            why: String::new(),
            fact_type,
            occurred_start: None,
            occurred_end: None,
            mentioned_at: None,
            entities: Vec::new(),
            causal_relations: Vec::new(),
        }
    }
}

/// Schema gate for an extraction batch. Causal targets must index into the
/// same batch.
pub fn validate_facts(facts: &[ExtractedFact]) -> Vec<String> {
    let mut out = Vec::new();
    for (i, f) in facts.iter().enumerate() {
        if f.what.trim().is_empty() {
            out.push(format!("fact {i}: empty 'what'"));
        }
        if let (Some(s), Some(e)) = (f.occurred_start, f.occurred_end) {
            if s > e {
                out.push(format!("fact {i}: occurred_start after occurred_end"));
            }
        }
        for m in &f.entities {
            if m.text.trim().is_empty() {
                out.push(format!("fact {i}: empty entity mention"));
            }
        }
        for r in &f.causal_relations {
            if r.target_fact_index >= facts.len() {
                out.push(format!(
                    "fact {i}: causal target {} outside batch of {}",
                    r.target_fact_index,
                    facts.len()
                ));
            } else if r.target_fact_index == i {
                out.push(format!("fact {i}: causal relation to itself"));
            }
            if !(0.0..=1.0).contains(&r.strength) {
                out.push(format!("fact {i}: causal strength {} outside [0,1]", r.strength));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssessLabel {
    Reinforce,
    Weaken,
    Contradict,
    Neutral,
}

impl std::str::FromStr for AssessLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "reinforce" => Ok(AssessLabel::Reinforce),
            "weaken" => Ok(AssessLabel::Weaken),
            "contradict" => Ok(AssessLabel::Contradict),
            "neutral" => Ok(AssessLabel::Neutral),
            other => Err(format!("unknown assessment label {other:?}")),
        }
    }
}

/// Opinion candidate emitted by the reflect synthesizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOpinion {
    pub opinion: String,
    #[serde(default)]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectRequest {
    pub system_message: String,
    pub query: String,
    pub memories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectOutput {
    pub response: String,
    #[serde(default)]
    pub opinions: Vec<CandidateOpinion>,
}
