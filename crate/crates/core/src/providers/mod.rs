//! Interfaces for every model-dependent step.
//!
//! The engine only ever sees schema-validated provider output. Calls go
//! through [`ProviderSuite`], which applies the retry count, the per-call
//! timeout and single-flight serialization.

mod command;
pub mod mock;
mod schema;

use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;

pub use command::CommandProvider;
pub use schema::{
    validate_facts, AssessLabel, CandidateOpinion, CausalRelation, EntityMention, ExtractedFact, FactType,
    ReflectOutput, ReflectRequest, Turn,
};

use crate::config::EngineConfig;
use crate::error::ProviderError;
use crate::model::Timestamp;

pub type ProviderResult<T> = Result<T, ProviderError>;

pub trait FactExtractor: Send + Sync {
    fn extract(&self, turns: &[Turn]) -> ProviderResult<Vec<ExtractedFact>>;

    /// Entity mentions in free text (used for opinion statements).
    fn mentions(&self, text: &str) -> ProviderResult<Vec<EntityMention>>;

    /// Implementations that cannot be called concurrently return true and
    /// the suite serializes their calls.
    fn single_flight(&self) -> bool {
        false
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> ProviderResult<Vec<f64>>;

    fn single_flight(&self) -> bool {
        false
    }
}

pub trait Reranker: Send + Sync {
    /// Relevance of `candidate` to `query`; higher is better.
    fn score(&self, query: &str, candidate: &str) -> ProviderResult<f64>;

    fn score_batch(&self, query: &str, candidates: &[String]) -> ProviderResult<Vec<f64>> {
        candidates.iter().map(|c| self.score(query, c)).collect()
    }

    fn single_flight(&self) -> bool {
        false
    }
}

pub trait Assessor: Send + Sync {
    fn assess(&self, opinion: &str, fact: &str) -> ProviderResult<AssessLabel>;

    fn single_flight(&self) -> bool {
        false
    }
}

pub trait Synthesizer: Send + Sync {
    /// Objective third-person observations about an entity from its facts.
    fn observations(&self, entity_name: &str, facts: &[String]) -> ProviderResult<Vec<String>>;

    /// Merged first-person background; conflicts resolve toward `snippet`.
    fn merge_background(&self, current: &str, snippet: &str) -> ProviderResult<String>;

    fn reflect(&self, request: &ReflectRequest) -> ProviderResult<ReflectOutput>;

    /// Revised opinion text after contradicting evidence.
    fn revise_opinion(&self, opinion: &str, fact: &str) -> ProviderResult<String>;

    fn single_flight(&self) -> bool {
        false
    }
}

/// Resolves temporal expressions the rule-based parser could not handle.
pub trait TemporalFallback: Send + Sync {
    fn resolve(&self, query: &str, now: Timestamp) -> ProviderResult<Option<(Timestamp, Timestamp)>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallPolicy {
    pub retries: u32,
    pub timeout: Option<Duration>,
}

impl Default for CallPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            timeout: None,
        }
    }
}

impl From<&EngineConfig> for CallPolicy {
    fn from(c: &EngineConfig) -> Self {
        Self {
            retries: c.provider_retries,
            timeout: c.provider_timeout_ms.map(Duration::from_millis),
        }
    }
}

#[derive(Default)]
struct Gates {
    extractor: Arc<Mutex<()>>,
    embedder: Arc<Mutex<()>>,
    reranker: Arc<Mutex<()>>,
    assessor: Arc<Mutex<()>>,
    synthesizer: Arc<Mutex<()>>,
}

/// The full set of providers the engine calls.
#[derive(Clone)]
pub struct ProviderSuite {
    pub extractor: Arc<dyn FactExtractor>,
    pub embedder: Arc<dyn Embedder>,
    pub reranker: Arc<dyn Reranker>,
    pub assessor: Arc<dyn Assessor>,
    pub synthesizer: Arc<dyn Synthesizer>,
    pub temporal_fallback: Option<Arc<dyn TemporalFallback>>,
    policy: CallPolicy,
    gates: Arc<Gates>,
}

impl std::fmt::Debug for ProviderSuite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderSuite")
            .field("policy", &self.policy)
            .field("temporal_fallback", &self.temporal_fallback.is_some())
            .finish_non_exhaustive()
    }
}

impl ProviderSuite {
    pub fn new(
        extractor: Arc<dyn FactExtractor>,
        embedder: Arc<dyn Embedder>,
        reranker: Arc<dyn Reranker>,
        assessor: Arc<dyn Assessor>,
        synthesizer: Arc<dyn Synthesizer>,
    ) -> Self {
        Self {
            extractor,
            embedder,
            reranker,
            assessor,
            synthesizer,
            temporal_fallback: None,
            policy: CallPolicy::default(),
            gates: Arc::new(Gates::default()),
        }
    }

    /// Deterministic offline providers sized for `config`.
    pub fn mock(config: &EngineConfig) -> Self {
        Self::new(
            Arc::new(mock::MockExtractor::default()),
            Arc::new(mock::MockEmbedder::new(config.embedding_dim)),
            Arc::new(mock::MockReranker::default()),
            Arc::new(mock::MockAssessor::default()),
            Arc::new(
                mock::MockSynthesizer::default()
                    .with_limits(config.max_observations_per_entity, config.background_max_len),
            ),
        )
        .with_policy(CallPolicy::from(config))
    }

    /// Every role served by one external command.
    pub fn external(command: CommandProvider, config: &EngineConfig) -> Self {
        let shared = Arc::new(command);
        Self::new(
            shared.clone(),
            shared.clone(),
            shared.clone(),
            shared.clone(),
            shared.clone(),
        )
        .with_temporal_fallback(shared)
        .with_policy(CallPolicy::from(config))
    }

    pub fn with_policy(mut self, policy: CallPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn policy(&self) -> CallPolicy {
        self.policy
    }

    pub fn with_extractor(mut self, p: Arc<dyn FactExtractor>) -> Self {
        self.extractor = p;
        self
    }

    pub fn with_embedder(mut self, p: Arc<dyn Embedder>) -> Self {
        self.embedder = p;
        self
    }

    pub fn with_reranker(mut self, p: Arc<dyn Reranker>) -> Self {
        self.reranker = p;
        self
    }

    pub fn with_assessor(mut self, p: Arc<dyn Assessor>) -> Self {
        self.assessor = p;
        self
    }

    pub fn with_synthesizer(mut self, p: Arc<dyn Synthesizer>) -> Self {
        self.synthesizer = p;
        self
    }

    pub fn with_temporal_fallback(mut self, p: Arc<dyn TemporalFallback>) -> Self {
        self.temporal_fallback = Some(p);
        self
    }

    // ---- guarded calls -----------------------------------------------------

    pub fn extract(&self, turns: &[Turn]) -> ProviderResult<Vec<ExtractedFact>> {
        let p = self.extractor.clone();
        let turns = turns.to_vec();
        self.guarded(
            "extractor",
            &self.gates.extractor,
            self.extractor.single_flight(),
            move || p.extract(&turns),
            |facts| validate_facts(facts),
        )
    }

    pub fn mentions(&self, text: &str) -> ProviderResult<Vec<EntityMention>> {
        let p = self.extractor.clone();
        let text = text.to_string();
        self.guarded(
            "extractor",
            &self.gates.extractor,
            self.extractor.single_flight(),
            move || p.mentions(&text),
            |ms| {
                ms.iter()
                    .filter(|m| m.text.trim().is_empty())
                    .map(|_| "empty entity mention".to_string())
                    .collect()
            },
        )
    }

    pub fn embed(&self, text: &str, dim: usize) -> ProviderResult<Vec<f64>> {
        let p = self.embedder.clone();
        let text = text.to_string();
        self.guarded(
            "embedder",
            &self.gates.embedder,
            self.embedder.single_flight(),
            move || p.embed(&text),
            move |v: &Vec<f64>| {
                let mut out = Vec::new();
                if v.len() != dim {
                    out.push(format!("embedding has dimension {}, expected {dim}", v.len()));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    out.push("embedding has non-finite components".into());
                }
                out
            },
        )
    }

    pub fn rerank(&self, query: &str, candidates: &[String]) -> ProviderResult<Vec<f64>> {
        let p = self.reranker.clone();
        let query = query.to_string();
        let cands = candidates.to_vec();
        let n = candidates.len();
        self.guarded(
            "reranker",
            &self.gates.reranker,
            self.reranker.single_flight(),
            move || p.score_batch(&query, &cands),
            move |scores: &Vec<f64>| {
                let mut out = Vec::new();
                if scores.len() != n {
                    out.push(format!("{} scores for {n} candidates", scores.len()));
                }
                if scores.iter().any(|s| !s.is_finite()) {
                    out.push("non-finite rerank score".into());
                }
                out
            },
        )
    }

    pub fn assess(&self, opinion: &str, fact: &str) -> ProviderResult<AssessLabel> {
        let p = self.assessor.clone();
        let (o, f) = (opinion.to_string(), fact.to_string());
        self.guarded(
            "assessor",
            &self.gates.assessor,
            self.assessor.single_flight(),
            move || p.assess(&o, &f),
            |_| Vec::new(),
        )
    }

    pub fn observations(&self, entity_name: &str, facts: &[String]) -> ProviderResult<Vec<String>> {
        let p = self.synthesizer.clone();
        let name = entity_name.to_string();
        let facts = facts.to_vec();
        self.guarded(
            "synthesizer",
            &self.gates.synthesizer,
            self.synthesizer.single_flight(),
            move || p.observations(&name, &facts),
            |obs: &Vec<String>| {
                obs.iter()
                    .filter(|o| o.trim().is_empty())
                    .map(|_| "empty observation".to_string())
                    .collect()
            },
        )
    }

    pub fn merge_background(&self, current: &str, snippet: &str) -> ProviderResult<String> {
        let p = self.synthesizer.clone();
        let (c, s) = (current.to_string(), snippet.to_string());
        self.guarded(
            "synthesizer",
            &self.gates.synthesizer,
            self.synthesizer.single_flight(),
            move || p.merge_background(&c, &s),
            |_| Vec::new(),
        )
    }

    pub fn reflect(&self, request: &ReflectRequest) -> ProviderResult<ReflectOutput> {
        let p = self.synthesizer.clone();
        let req = request.clone();
        self.guarded(
            "synthesizer",
            &self.gates.synthesizer,
            self.synthesizer.single_flight(),
            move || p.reflect(&req),
            |_| Vec::new(),
        )
    }

    pub fn revise_opinion(&self, opinion: &str, fact: &str) -> ProviderResult<String> {
        let p = self.synthesizer.clone();
        let (o, f) = (opinion.to_string(), fact.to_string());
        self.guarded(
            "synthesizer",
            &self.gates.synthesizer,
            self.synthesizer.single_flight(),
            move || p.revise_opinion(&o, &f),
            |_| Vec::new(),
        )
    }

    pub fn resolve_temporal(
        &self,
        query: &str,
        now: Timestamp,
    ) -> ProviderResult<Option<(Timestamp, Timestamp)>> {
        let Some(p) = self.temporal_fallback.clone() else {
            return Ok(None);
        };
        let q = query.to_string();
        let gate = Arc::new(Mutex::new(()));
        self.guarded(
            "temporal_fallback",
            &gate,
            false,
            move || p.resolve(&q, now),
            |r: &Option<(Timestamp, Timestamp)>| match r {
                Some((s, e)) if s > e => vec!["temporal fallback returned start after end".into()],
                _ => Vec::new(),
            },
        )
    }

    /// Retries on provider errors and on schema violations, up to
    /// `policy.retries` extra attempts.
    fn guarded<T, F, C>(
        &self,
        name: &str,
        gate: &Arc<Mutex<()>>,
        single_flight: bool,
        call: F,
        check: C,
    ) -> ProviderResult<T>
    where
        T: Send + 'static,
        F: Fn() -> ProviderResult<T> + Send + Sync + 'static,
        C: Fn(&T) -> Vec<String>,
    {
        let call = Arc::new(call);
        let mut last = None;
        for attempt in 0..=self.policy.retries {
            let outcome = run_once(
                name,
                call.clone(),
                gate.clone(),
                single_flight,
                self.policy.timeout,
            );
            let err = match outcome {
                Ok(value) => {
                    let violations = check(&value);
                    if violations.is_empty() {
                        return Ok(value);
                    }
                    ProviderError::Schema {
                        provider: name.to_string(),
                        violations,
                    }
                }
                Err(e) => e,
            };
            tracing::warn!(provider = name, attempt, error = %err, "provider call failed");
            last = Some(err);
        }
        Err(last.expect("at least one attempt is made"))
    }
}

fn run_once<T, F>(
    name: &str,
    call: Arc<F>,
    gate: Arc<Mutex<()>>,
    single_flight: bool,
    timeout: Option<Duration>,
) -> ProviderResult<T>
where
    T: Send + 'static,
    F: Fn() -> ProviderResult<T> + Send + Sync + 'static,
{
    let Some(timeout) = timeout else {
        let _guard = single_flight.then(|| gate.lock());
        return call();
    };
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let _guard = single_flight.then(|| gate.lock());
        let _ = tx.send(call());
    });
    match rx.recv_timeout(timeout) {
        Ok(result) => result,
        Err(mpsc::RecvTimeoutError::Timeout) => Err(ProviderError::Timeout {
            provider: name.to_string(),
            millis: timeout.as_millis(),
        }),
        Err(mpsc::RecvTimeoutError::Disconnected) => Err(ProviderError::call(name, "provider panicked")),
    }
}
