//! Domain types shared by every pipeline.
//!
//! Everything here is a plain value object. Mutation of stored state goes
//! through [`crate::store::Bank`].

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub type Timestamp = DateTime<Utc>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BankId(String);

impl BankId {
    pub fn new(id: impl Into<String>) -> Self {
        BankId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Bank ids double as file stems, so they are restricted to a safe alphabet.
    pub fn is_valid(&self) -> bool {
        !self.0.is_empty()
            && self.0.len() <= 128
            && self
                .0
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
            && !self.0.starts_with('.')
    }
}

impl fmt::Display for BankId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BankId {
    fn from(s: &str) -> Self {
        BankId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct UnitId(pub u64);

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct EntityId(pub u64);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// The four disjoint memory networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Network {
    World,
    Experience,
    Opinion,
    Observation,
}

impl Network {
    pub const ALL: [Network; 4] = [
        Network::World,
        Network::Experience,
        Network::Opinion,
        Network::Observation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Network::World => "world",
            Network::Experience => "experience",
            Network::Opinion => "opinion",
            Network::Observation => "observation",
        }
    }
}

/// Auxiliary per-unit data.
///
/// Lexical postings are not duplicated here; they live in the bank's
/// inverted index and are rebuilt from `text` on load.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitMetadata {
    #[serde(default)]
    pub context: String,
    #[serde(default)]
    pub access_count: u64,
    /// Number of times an opinion's text has been revised.
    #[serde(default)]
    pub revision: u32,
    /// For observation units: the entity being summarized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_entity: Option<EntityId>,
}

/// One stored fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryUnit {
    pub id: UnitId,
    pub bank_id: BankId,
    pub text: String,
    pub embedding: Vec<f64>,
    pub occurred_start: Timestamp,
    pub occurred_end: Timestamp,
    pub mentioned_at: Timestamp,
    pub network: Network,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub metadata: UnitMetadata,
}

impl MemoryUnit {
    /// Midpoint of the occurrence interval in seconds since the epoch.
    pub fn occurred_midpoint(&self) -> f64 {
        crate::time::midpoint_secs(self.occurred_start, self.occurred_end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehavioralProfile {
    pub skepticism: u8,
    pub literalism: u8,
    pub empathy: u8,
    pub bias_strength: f64,
}

impl Default for BehavioralProfile {
    fn default() -> Self {
        Self {
            skepticism: 3,
            literalism: 3,
            empathy: 3,
            bias_strength: 0.5,
        }
    }
}

impl BehavioralProfile {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("skepticism", self.skepticism),
            ("literalism", self.literalism),
            ("empathy", self.empathy),
        ] {
            if !(1..=5).contains(&v) {
                out.push(format!("{name} must be in 1..=5, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.bias_strength) {
            out.push(format!(
                "bias_strength must be in [0,1], got {}",
                self.bias_strength
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankProfile {
    pub name: String,
    pub profile: BehavioralProfile,
    #[serde(default)]
    pub background: String,
}

impl BankProfile {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            profile: BehavioralProfile::default(),
            background: String::new(),
        }
    }

    pub fn violations(&self, background_max_len: usize) -> Vec<String> {
        let mut out = self.profile.violations();
        if self.name.trim().is_empty() {
            out.push("name must not be empty".to_string());
        }
        if self.background.chars().count() > background_max_len {
            out.push(format!("background longer than {background_max_len} characters"));
        }
        if crate::text::has_second_person_subject(&self.background) {
            out.push("background is not in first person".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityKind {
    Person,
    Organization,
    Location,
    Product,
    Concept,
    Other,
}

/// A canonical entity in the bank's registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub canonical_name: String,
    pub kind: EntityKind,
    pub mention_count: u64,
    pub last_mentioned: Timestamp,
    /// Case-folded surface forms seen alongside this entity; feeds the
    /// co-occurrence term of entity resolution.
    #[serde(default)]
    pub co_mentions: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Temporal,
    Semantic,
    Entity,
    Causal,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 4] = [
        EdgeKind::Temporal,
        EdgeKind::Semantic,
        EdgeKind::Entity,
        EdgeKind::Causal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Temporal => "temporal",
            EdgeKind::Semantic => "semantic",
            EdgeKind::Entity => "entity",
            EdgeKind::Causal => "causal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalKind {
    Causes,
    CausedBy,
    Enables,
    Prevents,
}

/// Directed, typed, weighted link between two memory units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: UnitId,
    pub target: UnitId,
    pub weight: f64,
    pub kind: EdgeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub causal_subtype: Option<CausalKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_id: Option<EntityId>,
}

impl Edge {
    pub fn temporal(source: UnitId, target: UnitId, weight: f64) -> Self {
        Self::plain(source, target, weight, EdgeKind::Temporal)
    }

    pub fn semantic(source: UnitId, target: UnitId, weight: f64) -> Self {
        Self::plain(source, target, weight, EdgeKind::Semantic)
    }

    pub fn entity(source: UnitId, target: UnitId, entity: EntityId) -> Self {
        Self {
            entity_id: Some(entity),
            ..Self::plain(source, target, 1.0, EdgeKind::Entity)
        }
    }

    pub fn causal(source: UnitId, target: UnitId, subtype: CausalKind) -> Self {
        Self {
            causal_subtype: Some(subtype),
            ..Self::plain(source, target, 1.0, EdgeKind::Causal)
        }
    }

    fn plain(source: UnitId, target: UnitId, weight: f64, kind: EdgeKind) -> Self {
        Self {
            source,
            target,
            weight,
            kind,
            causal_subtype: None,
            entity_id: None,
        }
    }

    pub fn key(&self) -> EdgeKey {
        (self.source, self.target, self.kind)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.weight) {
            out.push(format!("edge weight {} outside [0,1]", self.weight));
        }
        if self.causal_subtype.is_some() != (self.kind == EdgeKind::Causal) {
            out.push("causal_subtype must be set iff kind = causal".to_string());
        }
        if self.entity_id.is_some() != (self.kind == EdgeKind::Entity) {
            out.push("entity_id must be set iff kind = entity".to_string());
        }
        out
    }
}

pub type EdgeKey = (UnitId, UnitId, EdgeKind);

/// Read view of an opinion-network unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Opinion {
    pub unit_id: UnitId,
    pub text: String,
    pub confidence: f64,
    pub formed_at: Timestamp,
    pub bank_id: BankId,
    pub entities: BTreeSet<EntityId>,
}
