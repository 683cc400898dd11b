//! Bank storage: unit/edge/entity tables, lexical and vector indexes, and a
//! copy-on-write handle giving snapshot-isolated reads with a single writer.

mod lexical;
mod snapshot;
mod vector;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

pub use lexical::{Bm25Params, InvertedIndex};
pub use snapshot::{load_snapshot, save_snapshot, IndexChecksums, FORMAT_VERSION};
pub use vector::{cosine, VectorIndex};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::model::{
    BankId, BankProfile, Edge, EdgeKey, EdgeKind, Entity, EntityId, MemoryUnit, Network, Opinion, Timestamp,
    UnitId,
};
use crate::text::tokenize;
use crate::validate::validate_unit;

/// Injected failure points for crash-consistency tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsertFault {
    /// Abort after the unit table is written, before any index update.
    AfterUnitTable,
    /// Abort after the lexical index is updated, before the vector index.
    AfterLexicalIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bank {
    id: BankId,
    profile: BankProfile,
    embedding_dim: usize,
    units: BTreeMap<UnitId, MemoryUnit>,
    edges: BTreeMap<EdgeKey, Edge>,
    out_edges: BTreeMap<UnitId, BTreeSet<EdgeKey>>,
    in_edges: BTreeMap<UnitId, BTreeSet<EdgeKey>>,
    entities: BTreeMap<EntityId, Entity>,
    mentions: BTreeMap<UnitId, BTreeSet<EntityId>>,
    entity_units: BTreeMap<EntityId, BTreeSet<UnitId>>,
    lexical: InvertedIndex,
    vectors: VectorIndex,
    next_unit: u64,
    next_entity: u64,
}

impl Bank {
    pub fn new(id: BankId, profile: BankProfile, embedding_dim: usize) -> Self {
        Self {
            id,
            profile,
            embedding_dim,
            units: BTreeMap::new(),
            edges: BTreeMap::new(),
            out_edges: BTreeMap::new(),
            in_edges: BTreeMap::new(),
            entities: BTreeMap::new(),
            mentions: BTreeMap::new(),
            entity_units: BTreeMap::new(),
            lexical: InvertedIndex::default(),
            vectors: VectorIndex::default(),
            next_unit: 1,
            next_entity: 1,
        }
    }

    pub fn id(&self) -> &BankId {
        &self.id
    }

    pub fn profile(&self) -> &BankProfile {
        &self.profile
    }

    pub fn set_profile(&mut self, profile: BankProfile) {
        self.profile = profile;
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn allocate_unit_id(&mut self) -> UnitId {
        let id = UnitId(self.next_unit);
        self.next_unit += 1;
        id
    }

    pub fn allocate_entity_id(&mut self) -> EntityId {
        let id = EntityId(self.next_entity);
        self.next_entity += 1;
        id
    }

    // ---- units -------------------------------------------------------------

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn unit(&self, id: UnitId) -> Option<&MemoryUnit> {
        self.units.get(&id)
    }

    pub fn units(&self) -> impl Iterator<Item = &MemoryUnit> {
        self.units.values()
    }

    pub fn units_in(&self, network: Network) -> impl Iterator<Item = &MemoryUnit> {
        self.units.values().filter(move |u| u.network == network)
    }

    pub fn mentioned_at(&self, id: UnitId) -> Option<Timestamp> {
        self.units.get(&id).map(|u| u.mentioned_at)
    }

    /// Validates every unit first; nothing is stored unless all pass.
    pub fn upsert_units(&mut self, units: Vec<MemoryUnit>, config: &EngineConfig) -> Result<Vec<UnitId>> {
        self.upsert_units_with_fault(units, config, None)
    }

    pub fn upsert_units_with_fault(
        &mut self,
        units: Vec<MemoryUnit>,
        config: &EngineConfig,
        fault: Option<UpsertFault>,
    ) -> Result<Vec<UnitId>> {
        let mut violations = Vec::new();
        for u in &units {
            for v in validate_unit(u, config) {
                violations.push(format!("{}: {v}", u.id));
            }
            if u.embedding.len() != self.embedding_dim {
                violations.push(format!(
                    "{}: embedding dimension {} does not match bank dimension {}",
                    u.id,
                    u.embedding.len(),
                    self.embedding_dim
                ));
            }
            if u.bank_id != self.id {
                violations.push(format!("{}: belongs to bank {}", u.id, u.bank_id));
            }
        }
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }

        let ids: Vec<UnitId> = units.iter().map(|u| u.id).collect();
        for u in &units {
            self.next_unit = self.next_unit.max(u.id.0 + 1);
        }
        let staged: Vec<(UnitId, String, Vec<f64>)> = units
            .iter()
            .map(|u| (u.id, u.text.clone(), u.embedding.clone()))
            .collect();
        for u in units {
            self.units.insert(u.id, u);
        }
        if fault == Some(UpsertFault::AfterUnitTable) {
            return Err(Error::Storage("injected crash after unit table write".into()));
        }
        for (id, text, _) in &staged {
            self.lexical.insert(*id, text);
        }
        if fault == Some(UpsertFault::AfterLexicalIndex) {
            return Err(Error::Storage("injected crash after lexical index write".into()));
        }
        for (id, _, v) in &staged {
            self.vectors.insert(*id, v);
        }
        Ok(ids)
    }

    /// Replaces text and embedding of an existing unit, keeping indexes in step.
    pub fn update_unit(&mut self, unit: MemoryUnit, config: &EngineConfig) -> Result<()> {
        if !self.units.contains_key(&unit.id) {
            return Err(Error::InvalidInput(format!("unknown unit {}", unit.id)));
        }
        self.upsert_units(vec![unit], config).map(|_| ())
    }

    /// Removes a unit together with its edges, mentions and index entries.
    pub fn remove_unit(&mut self, id: UnitId) -> Option<MemoryUnit> {
        let unit = self.units.remove(&id)?;
        let keys: Vec<EdgeKey> = self
            .out_edges
            .remove(&id)
            .into_iter()
            .flatten()
            .chain(self.in_edges.remove(&id).into_iter().flatten())
            .collect();
        for key in keys {
            self.remove_edge(key);
        }
        if let Some(ents) = self.mentions.remove(&id) {
            for e in ents {
                if let Some(set) = self.entity_units.get_mut(&e) {
                    set.remove(&id);
                    if set.is_empty() {
                        self.entity_units.remove(&e);
                    }
                }
            }
        }
        self.lexical.remove(id);
        self.vectors.remove(id);
        Some(unit)
    }

    pub fn opinions(&self) -> Vec<Opinion> {
        self.units_in(Network::Opinion)
            .map(|u| Opinion {
                unit_id: u.id,
                text: u.text.clone(),
                confidence: u.confidence.unwrap_or(0.0),
                formed_at: u.mentioned_at,
                bank_id: u.bank_id.clone(),
                entities: self.mentions_of(u.id).clone(),
            })
            .collect()
    }

    // ---- edges -------------------------------------------------------------

    /// Inserts an edge unless one with the same (source, target, kind) exists.
    /// Returns whether a new edge was stored.
    pub fn insert_edge(&mut self, edge: Edge) -> Result<bool> {
        let mut problems = edge.violations();
        for end in [edge.source, edge.target] {
            if !self.units.contains_key(&end) {
                problems.push(format!("edge endpoint {end} does not exist"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let key = edge.key();
        if self.edges.contains_key(&key) {
            return Ok(false);
        }
        self.out_edges.entry(edge.source).or_default().insert(key);
        self.in_edges.entry(edge.target).or_default().insert(key);
        self.edges.insert(key, edge);
        Ok(true)
    }

    fn remove_edge(&mut self, key: EdgeKey) {
        if self.edges.remove(&key).is_none() {
            return;
        }
        let (src, dst, _) = key;
        if let Some(s) = self.out_edges.get_mut(&src) {
            s.remove(&key);
            if s.is_empty() {
                self.out_edges.remove(&src);
            }
        }
        if let Some(s) = self.in_edges.get_mut(&dst) {
            s.remove(&key);
            if s.is_empty() {
                self.in_edges.remove(&dst);
            }
        }
    }

    pub fn edge(&self, key: &EdgeKey) -> Option<&Edge> {
        self.edges.get(key)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_counts_by_kind(&self) -> BTreeMap<EdgeKind, usize> {
        let mut out: BTreeMap<EdgeKind, usize> = EdgeKind::ALL.iter().map(|k| (*k, 0)).collect();
        for e in self.edges.values() {
            *out.entry(e.kind).or_default() += 1;
        }
        out
    }

    pub fn out_edges(&self, id: UnitId) -> impl Iterator<Item = &Edge> {
        self.out_edges
            .get(&id)
            .into_iter()
            .flatten()
            .filter_map(|k| self.edges.get(k))
    }

    // ---- entities ----------------------------------------------------------

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(&id)
    }

    pub fn entity_mut(&mut self, id: EntityId) -> Option<&mut Entity> {
        self.entities.get_mut(&id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn insert_entity(&mut self, entity: Entity) {
        self.next_entity = self.next_entity.max(entity.id.0 + 1);
        self.entities.insert(entity.id, entity);
    }

    pub fn set_mentions(&mut self, unit: UnitId, entities: BTreeSet<EntityId>) {
        if let Some(old) = self.mentions.remove(&unit) {
            for e in old {
                if let Some(set) = self.entity_units.get_mut(&e) {
                    set.remove(&unit);
                    if set.is_empty() {
                        self.entity_units.remove(&e);
                    }
                }
            }
        }
        if entities.is_empty() {
            return;
        }
        for e in &entities {
            self.entity_units.entry(*e).or_default().insert(unit);
        }
        self.mentions.insert(unit, entities);
    }

    pub fn mentions_of(&self, unit: UnitId) -> &BTreeSet<EntityId> {
        static EMPTY: BTreeSet<EntityId> = BTreeSet::new();
        self.mentions.get(&unit).unwrap_or(&EMPTY)
    }

    pub fn units_mentioning(&self, entity: EntityId) -> &BTreeSet<UnitId> {
        static EMPTY: BTreeSet<UnitId> = BTreeSet::new();
        self.entity_units.get(&entity).unwrap_or(&EMPTY)
    }

    pub fn mention_table(&self) -> &BTreeMap<UnitId, BTreeSet<EntityId>> {
        &self.mentions
    }

    // ---- indexes -----------------------------------------------------------

    pub fn lexical(&self) -> &InvertedIndex {
        &self.lexical
    }

    pub fn vectors(&self) -> &VectorIndex {
        &self.vectors
    }

    /// Differences between the unit table and the two indexes.
    pub fn verify_indexes(&self) -> Vec<String> {
        let mut out = Vec::new();
        for u in self.units.values() {
            let mut expected: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokenize(&u.text) {
                *expected.entry(t).or_default() += 1;
            }
            if !self.lexical.contains(u.id) || self.lexical.terms_of(u.id) != expected {
                out.push(format!("lexical postings stale for {}", u.id));
            }
            if self.vectors.get(u.id) != Some(u.embedding.as_slice()) {
                out.push(format!("vector entry stale for {}", u.id));
            }
        }
        if self.lexical.doc_count() != self.units.len() {
            out.push(format!(
                "lexical index holds {} documents for {} units",
                self.lexical.doc_count(),
                self.units.len()
            ));
        }
        if self.vectors.len() != self.units.len() {
            out.push(format!(
                "vector index holds {} entries for {} units",
                self.vectors.len(),
                self.units.len()
            ));
        }
        out
    }

    /// Recovery path: rebuilds both indexes from the unit table.
    pub fn rebuild_indexes(&mut self) {
        self.lexical = InvertedIndex::default();
        self.vectors = VectorIndex::default();
        for u in self.units.values() {
            self.lexical.insert(u.id, &u.text);
            self.vectors.insert(u.id, &u.embedding);
        }
    }

    /// Structural invariants: no dangling edges or mentions, confidences in range.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut out = Vec::new();
        for e in self.edges.values() {
            if !self.units.contains_key(&e.source) || !self.units.contains_key(&e.target) {
                out.push(format!("dangling edge {:?}", e.key()));
            }
            out.extend(e.violations());
        }
        for (u, ents) in &self.mentions {
            if !self.units.contains_key(u) {
                out.push(format!("mentions for missing unit {u}"));
            }
            for e in ents {
                if !self.entities.contains_key(e) {
                    out.push(format!("unit {u} mentions missing entity {e}"));
                }
            }
        }
        for u in self.units.values() {
            if let Some(c) = u.confidence {
                if !(0.0..=1.0).contains(&c) {
                    out.push(format!("confidence {c} out of range on {}", u.id));
                }
            }
        }
        out
    }
}

/// Shared handle to one bank: readers take cheap snapshots, a single writer
/// mutates a private copy and publishes it atomically on success.
#[derive(Debug)]
pub struct BankHandle {
    current: RwLock<Arc<Bank>>,
    writer: Mutex<()>,
}

impl BankHandle {
    pub fn new(bank: Bank) -> Self {
        Self {
            current: RwLock::new(Arc::new(bank)),
            writer: Mutex::new(()),
        }
    }

    pub fn snapshot(&self) -> Arc<Bank> {
        self.current.read().clone()
    }

    /// Runs `f` against a working copy under the write lock. The copy is
    /// published only if `f` succeeds; on error the bank is untouched.
    pub fn write<T>(&self, f: impl FnOnce(&mut Bank) -> Result<T>) -> Result<T> {
        let _guard = self.writer.lock();
        let mut working = Bank::clone(&self.snapshot());
        let out = f(&mut working)?;
        *self.current.write() = Arc::new(working);
        Ok(out)
    }

    /// Like [`BankHandle::write`] but also hands back the published snapshot.
    pub fn write_publish<T>(&self, f: impl FnOnce(&mut Bank) -> Result<T>) -> Result<(T, Arc<Bank>)> {
        let _guard = self.writer.lock();
        let mut working = Bank::clone(&self.snapshot());
        let out = f(&mut working)?;
        let published = Arc::new(working);
        *self.current.write() = published.clone();
        Ok((out, published))
    }
}
