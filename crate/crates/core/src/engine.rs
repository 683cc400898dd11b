//! Bank registry, persistence and the background observation worker.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;

use chrono::Utc;
use parking_lot::{Condvar, Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::model::{BankId, BankProfile, EdgeKind, Entity, EntityId, Network, Opinion, Timestamp};
use crate::providers::ProviderSuite;
use crate::recall::{recall, RecallOptions, RecallResult};
use crate::reflect::{reflect, ReflectResult};
use crate::retain::{refresh_observations, retain, RetainReceipt, RetainRequest};
use crate::store::{load_snapshot, save_snapshot, Bank, BankHandle};

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        crate::time::truncate_secs(Utc::now())
    }
}

/// Settable clock for tests and reproducible runs.
#[derive(Debug)]
pub struct FixedClock(Mutex<Timestamp>);

impl FixedClock {
    pub fn new(t: Timestamp) -> Self {
        Self(Mutex::new(t))
    }

    pub fn set(&self, t: Timestamp) {
        *self.0.lock() = t;
    }

    pub fn advance(&self, d: chrono::Duration) {
        let mut t = self.0.lock();
        *t += d;
    }
}

impl Clock for FixedClock {
    fn now(&self) -> Timestamp {
        *self.0.lock()
    }
}

/// Partial profile update; absent fields keep their value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileUpdate {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub skepticism: Option<u8>,
    #[serde(default)]
    pub literalism: Option<u8>,
    #[serde(default)]
    pub empathy: Option<u8>,
    #[serde(default, alias = "bias")]
    pub bias_strength: Option<f64>,
    #[serde(default)]
    pub background: Option<String>,
}

impl ProfileUpdate {
    pub fn apply(&self, p: &mut BankProfile) {
        if let Some(v) = &self.name {
            p.name = v.clone();
        }
        if let Some(v) = self.skepticism {
            p.profile.skepticism = v;
        }
        if let Some(v) = self.literalism {
            p.profile.literalism = v;
        }
        if let Some(v) = self.empathy {
            p.profile.empathy = v;
        }
        if let Some(v) = self.bias_strength {
            p.profile.bias_strength = v;
        }
        if let Some(v) = &self.background {
            p.background = v.clone();
        }
    }
}

/// Summary of a bank's contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankInspection {
    pub bank_id: BankId,
    pub profile: BankProfile,
    pub units_by_network: BTreeMap<Network, usize>,
    pub edges_by_kind: BTreeMap<EdgeKind, usize>,
    pub entities: Vec<Entity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opinions: Option<Vec<Opinion>>,
}

enum Job {
    Refresh {
        bank: BankId,
        entity: EntityId,
        attempt: u32,
    },
    Shutdown,
}

struct Inner {
    banks: RwLock<BTreeMap<BankId, Arc<BankHandle>>>,
    providers: ProviderSuite,
    config: EngineConfig,
    clock: Arc<dyn Clock>,
    data_dir: Option<PathBuf>,
    persist: Mutex<()>,
    pending: Mutex<usize>,
    idle: Condvar,
}

impl Inner {
    fn handle(&self, id: &BankId) -> Result<Arc<BankHandle>> {
        self.banks
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::BankNotFound(id.clone()))
    }

    fn snapshot_path(&self, id: &BankId) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    /// Writes the bank's current state. Always saves the latest published
    /// snapshot, so concurrent writers cannot persist out of order.
    fn persist(&self, id: &BankId) -> Result<()> {
        let Some(path) = self.snapshot_path(id) else {
            return Ok(());
        };
        let _guard = self.persist.lock();
        let bank = self.handle(id)?.snapshot();
        save_snapshot(&bank, &path)
    }

    fn refresh(&self, bank: &BankId, entity: EntityId) -> Result<()> {
        let handle = self.handle(bank)?;
        let now = self.clock.now();
        handle.write(|b| {
            if b.entity(entity).is_none() {
                return Ok(());
            }
            refresh_observations(b, entity, &self.providers, &self.config, now).map(|_| ())
        })?;
        self.persist(bank)
    }

    fn job_done(&self) {
        let mut p = self.pending.lock();
        *p = p.saturating_sub(1);
        if *p == 0 {
            self.idle.notify_all();
        }
    }
}

fn worker(inner: Arc<Inner>, rx: mpsc::Receiver<Job>, tx: Sender<Job>) {
    while let Ok(job) = rx.recv() {
        let Job::Refresh {
            bank,
            entity,
            attempt,
        } = job
        else {
            break;
        };
        if let Err(err) = inner.refresh(&bank, entity) {
            if attempt < inner.config.observation_refresh_retries && !matches!(err, Error::BankNotFound(_)) {
                tracing::warn!(%bank, %entity, attempt, error = %err, "observation refresh failed; requeued");
                *inner.pending.lock() += 1;
                let _ = tx.send(Job::Refresh {
                    bank: bank.clone(),
                    entity,
                    attempt: attempt + 1,
                });
            } else {
                tracing::error!(%bank, %entity, error = %err, "observation refresh abandoned");
            }
        }
        inner.job_done();
    }
}

pub struct EngineBuilder {
    config: EngineConfig,
    providers: Option<ProviderSuite>,
    clock: Arc<dyn Clock>,
    data_dir: Option<PathBuf>,
}

impl EngineBuilder {
    pub fn providers(mut self, p: ProviderSuite) -> Self {
        self.providers = Some(p);
        self
    }

    pub fn clock(mut self, c: Arc<dyn Clock>) -> Self {
        self.clock = c;
        self
    }

    pub fn data_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.data_dir = Some(dir.into());
        self
    }

    /// Validates the configuration and loads every snapshot in the data
    /// directory.
    pub fn build(self) -> Result<Engine> {
        self.config.validate()?;
        let providers = self
            .providers
            .unwrap_or_else(|| ProviderSuite::mock(&self.config));
        let mut banks = BTreeMap::new();
        if let Some(dir) = &self.data_dir {
            std::fs::create_dir_all(dir)?;
            for bank in load_dir(dir)? {
                if bank.embedding_dim() != self.config.embedding_dim {
                    return Err(Error::Config(format!(
                        "bank {} has embedding dimension {}, engine is configured for {}",
                        bank.id(),
                        bank.embedding_dim(),
                        self.config.embedding_dim
                    )));
                }
                banks.insert(bank.id().clone(), Arc::new(BankHandle::new(bank)));
            }
        }
        let inner = Arc::new(Inner {
            banks: RwLock::new(banks),
            providers,
            config: self.config,
            clock: self.clock,
            data_dir: self.data_dir,
            persist: Mutex::new(()),
            pending: Mutex::new(0),
            idle: Condvar::new(),
        });
        let (tx, rx) = mpsc::channel();
        let worker_inner = inner.clone();
        let worker_tx = tx.clone();
        let handle = std::thread::Builder::new()
            .name("observation-refresh".into())
            .spawn(move || worker(worker_inner, rx, worker_tx))?;
        Ok(Engine {
            inner,
            jobs: Mutex::new(tx),
            worker: Some(handle),
        })
    }
}

fn load_dir(dir: &Path) -> Result<Vec<Bank>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            load_snapshot(p).map_err(|e| match e {
                Error::Storage(msg) => Error::Storage(format!("{}: {msg}", p.display())),
                other => other,
            })
        })
        .collect()
}

/// Owns every bank and serves the three core operations.
pub struct Engine {
    inner: Arc<Inner>,
    jobs: Mutex<Sender<Job>>,
    worker: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("banks", &self.bank_ids())
            .field("data_dir", &self.inner.data_dir)
            .finish_non_exhaustive()
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.flush_background();
        let _ = self.jobs.lock().send(Job::Shutdown);
        if let Some(h) = self.worker.take() {
            let _ = h.join();
        }
    }
}

impl Engine {
    pub fn builder(config: EngineConfig) -> EngineBuilder {
        EngineBuilder {
            config,
            providers: None,
            clock: Arc::new(SystemClock),
            data_dir: None,
        }
    }

    /// In-memory engine with the given providers and the system clock.
    pub fn new(config: EngineConfig, providers: ProviderSuite) -> Result<Self> {
        Self::builder(config).providers(providers).build()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.inner.config
    }

    pub fn providers(&self) -> &ProviderSuite {
        &self.inner.providers
    }

    pub fn now(&self) -> Timestamp {
        self.inner.clock.now()
    }

    pub fn bank_ids(&self) -> Vec<BankId> {
        self.inner.banks.read().keys().cloned().collect()
    }

    pub fn bank(&self, id: &BankId) -> Result<Arc<BankHandle>> {
        self.inner.handle(id)
    }

    pub fn snapshot(&self, id: &BankId) -> Result<Arc<Bank>> {
        Ok(self.bank(id)?.snapshot())
    }

    pub fn create_bank(&self, id: &BankId, profile: BankProfile) -> Result<BankProfile> {
        if !id.is_valid() {
            return Err(Error::Validation(vec![format!(
                "bank id {id:?} must be 1-64 characters of [A-Za-z0-9_.-]"
            )]));
        }
        let violations = profile.violations(self.inner.config.background_max_len);
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        {
            let mut banks = self.inner.banks.write();
            if banks.contains_key(id) {
                return Err(Error::BankExists(id.clone()));
            }
            let bank = Bank::new(id.clone(), profile.clone(), self.inner.config.embedding_dim);
            banks.insert(id.clone(), Arc::new(BankHandle::new(bank)));
        }
        self.inner.persist(id)?;
        Ok(profile)
    }

    pub fn configure_bank(&self, id: &BankId, update: &ProfileUpdate) -> Result<BankProfile> {
        let max = self.inner.config.background_max_len;
        let profile = self.bank(id)?.write(|b| {
            let mut p = b.profile().clone();
            update.apply(&mut p);
            let violations = p.violations(max);
            if !violations.is_empty() {
                return Err(Error::Validation(violations));
            }
            b.set_profile(p.clone());
            Ok(p)
        })?;
        self.inner.persist(id)?;
        Ok(profile)
    }

    pub fn retain(&self, id: &BankId, request: &RetainRequest) -> Result<RetainReceipt> {
        self.retain_with(id, request, &self.inner.config)
    }

    pub fn retain_with(
        &self,
        id: &BankId,
        request: &RetainRequest,
        config: &EngineConfig,
    ) -> Result<RetainReceipt> {
        let handle = self.bank(id)?;
        let done = retain(&handle, request, &self.inner.providers, config, self.now())?;
        self.inner.persist(id)?;
        self.schedule_observations(id, &done.touched_entities, config);
        Ok(done.receipt)
    }

    fn schedule_observations(&self, id: &BankId, entities: &BTreeSet<EntityId>, config: &EngineConfig) {
        if config.background_observations {
            let tx = self.jobs.lock();
            for e in entities {
                *self.inner.pending.lock() += 1;
                let job = Job::Refresh {
                    bank: id.clone(),
                    entity: *e,
                    attempt: 0,
                };
                if tx.send(job).is_err() {
                    self.inner.job_done();
                }
            }
            return;
        }
        for e in entities {
            let mut attempt = 0;
            while let Err(err) = self.inner.refresh(id, *e) {
                if attempt >= config.observation_refresh_retries {
                    tracing::error!(bank = %id, entity = %e, error = %err, "observation refresh abandoned");
                    break;
                }
                attempt += 1;
            }
        }
    }

    /// Blocks until every queued observation refresh has finished.
    pub fn flush_background(&self) {
        let mut p = self.inner.pending.lock();
        while *p > 0 {
            self.inner.idle.wait(&mut p);
        }
    }

    pub fn recall(
        &self,
        id: &BankId,
        query: &str,
        budget: usize,
        options: RecallOptions,
    ) -> Result<RecallResult> {
        self.recall_with(id, query, budget, options, &self.inner.config)
    }

    pub fn recall_with(
        &self,
        id: &BankId,
        query: &str,
        budget: usize,
        options: RecallOptions,
        config: &EngineConfig,
    ) -> Result<RecallResult> {
        let bank = self.snapshot(id)?;
        recall(
            &bank,
            query,
            budget,
            &self.inner.providers,
            config,
            self.now(),
            options,
        )
    }

    pub fn reflect(&self, id: &BankId, query: &str) -> Result<ReflectResult> {
        self.reflect_with(id, query, &self.inner.config)
    }

    pub fn reflect_with(&self, id: &BankId, query: &str, config: &EngineConfig) -> Result<ReflectResult> {
        let handle = self.bank(id)?;
        let out = reflect(&handle, query, &self.inner.providers, config, self.now())?;
        if !out.opinions_formed.is_empty() || !out.opinions_updated.is_empty() {
            self.inner.persist(id)?;
        }
        Ok(out)
    }

    pub fn inspect(&self, id: &BankId, with_opinions: bool) -> Result<BankInspection> {
        let bank = self.snapshot(id)?;
        let mut units_by_network: BTreeMap<Network, usize> = Network::ALL.iter().map(|n| (*n, 0)).collect();
        for u in bank.units() {
            *units_by_network.entry(u.network).or_default() += 1;
        }
        Ok(BankInspection {
            bank_id: id.clone(),
            profile: bank.profile().clone(),
            units_by_network,
            edges_by_kind: bank.edge_counts_by_kind(),
            entities: bank.entities().cloned().collect(),
            opinions: with_opinions.then(|| bank.opinions()),
        })
    }

    pub fn export(&self, id: &BankId) -> Result<String> {
        Ok(self.snapshot(id)?.to_snapshot_string())
    }

    /// Loads a snapshot as a bank. An existing bank with the same id is
    /// replaced only when `replace` is set.
    pub fn import(&self, snapshot: &str, replace: bool) -> Result<BankId> {
        let bank = Bank::from_snapshot_str(snapshot)?;
        if bank.embedding_dim() != self.inner.config.embedding_dim {
            return Err(Error::Validation(vec![format!(
                "snapshot embedding dimension {} does not match engine dimension {}",
                bank.embedding_dim(),
                self.inner.config.embedding_dim
            )]));
        }
        let id = bank.id().clone();
        {
            let mut banks = self.inner.banks.write();
            if banks.contains_key(&id) && !replace {
                return Err(Error::BankExists(id));
            }
            banks.insert(id.clone(), Arc::new(BankHandle::new(bank)));
        }
        self.inner.persist(&id)?;
        Ok(id)
    }
}
