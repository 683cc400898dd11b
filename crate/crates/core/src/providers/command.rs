//! Adapter that serves every provider role by spawning an external program.
//!
//! Each call writes one JSON request line to the program's stdin and reads
//! one JSON document from its stdout:
//!
//! | op             | request fields                 | response                         |
//! |----------------|--------------------------------|----------------------------------|
//! | `extract`      | `turns`                        | `{"facts": [...]}`               |
//! | `mentions`     | `text`                         | `{"entities": [...]}`            |
//! | `embed`        | `text`                         | `{"embedding": [...]}`           |
//! | `rerank`       | `query`, `candidates`          | `{"scores": [...]}`              |
//! | `assess`       | `opinion`, `fact`              | `{"label": "reinforce"}`         |
//! | `observations` | `entity`, `facts`              | `{"observations": [{"observation": ".."}]}` |
//! | `merge`        | `current`, `snippet`           | `{"background": ".."}`           |
//! | `reflect`      | `system_message`, `query`, `memories` | `{"response": .., "opinions": [..]}` |
//! | `revise`       | `opinion`, `fact`              | `{"opinion": ".."}`              |
//! | `temporal`     | `query`, `now`                 | `{"start": .., "end": ..}` or `null` |

use std::io::Write;
use std::process::{Command, Stdio};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    AssessLabel, Assessor, Embedder, EntityMention, ExtractedFact, FactExtractor, ProviderResult,
    ReflectOutput, ReflectRequest, Reranker, Synthesizer, TemporalFallback, Turn,
};
use crate::error::ProviderError;
use crate::model::Timestamp;

#[derive(Debug, Clone)]
pub struct CommandProvider {
    program: String,
    args: Vec<String>,
    dim: usize,
}

impl CommandProvider {
    pub fn new(program: impl Into<String>, args: Vec<String>, dim: usize) -> Self {
        Self {
            program: program.into(),
            args,
            dim,
        }
    }

    /// Splits a shell-like command line on whitespace.
    pub fn from_command_line(line: &str, dim: usize) -> Option<Self> {
        let mut parts = line.split_whitespace().map(str::to_string);
        let program = parts.next()?;
        Some(Self::new(program, parts.collect(), dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn call<T: DeserializeOwned>(&self, role: &str, request: Value) -> ProviderResult<T> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ProviderError::call(role, format!("spawn {}: {e}", self.program)))?;
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            let line = format!("{request}\n");
            stdin
                .write_all(line.as_bytes())
                .map_err(|e| ProviderError::call(role, format!("write request: {e}")))?;
        }
        let out = child
            .wait_with_output()
            .map_err(|e| ProviderError::call(role, format!("wait: {e}")))?;
        if !out.status.success() {
            return Err(ProviderError::call(
                role,
                format!(
                    "exit status {}: {}",
                    out.status,
                    String::from_utf8_lossy(&out.stderr).trim()
                ),
            ));
        }
        serde_json::from_slice(&out.stdout).map_err(|e| ProviderError::Schema {
            provider: role.to_string(),
            violations: vec![format!("unparseable response: {e}")],
        })
    }
}

#[derive(Deserialize)]
struct Facts {
    facts: Vec<ExtractedFact>,
}

#[derive(Deserialize)]
struct Entities {
    entities: Vec<EntityMention>,
}

#[derive(Deserialize)]
struct Embedding {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct Scores {
    scores: Vec<f64>,
}

#[derive(Deserialize)]
struct Label {
    label: AssessLabel,
}

#[derive(Deserialize)]
struct ObservationItem {
    observation: String,
}

#[derive(Deserialize)]
struct Observations {
    observations: Vec<ObservationItem>,
}

#[derive(Deserialize)]
struct Background {
    background: String,
}

#[derive(Deserialize)]
struct Revised {
    opinion: String,
}

#[derive(Deserialize)]
struct Range {
    start: Timestamp,
    end: Timestamp,
}

impl FactExtractor for CommandProvider {
    fn extract(&self, turns: &[Turn]) -> ProviderResult<Vec<ExtractedFact>> {
        let r: Facts = self.call("extractor", json!({"op": "extract", "turns": turns}))?;
        Ok(r.facts)
    }

    fn mentions(&self, text: &str) -> ProviderResult<Vec<EntityMention>> {
        let r: Entities = self.call("extractor", json!({"op": "mentions", "text": text}))?;
        Ok(r.entities)
    }
}

impl Embedder for CommandProvider {
    fn embed(&self, text: &str) -> ProviderResult<Vec<f64>> {
        let r: Embedding = self.call("embedder", json!({"op": "embed", "text": text}))?;
        Ok(r.embedding)
    }
}

impl Reranker for CommandProvider {
    fn score(&self, query: &str, candidate: &str) -> ProviderResult<f64> {
        let s = self.score_batch(query, &[candidate.to_string()])?;
        s.first()
            .copied()
            .ok_or_else(|| ProviderError::call("reranker", "no score returned"))
    }

    fn score_batch(&self, query: &str, candidates: &[String]) -> ProviderResult<Vec<f64>> {
        let r: Scores = self.call(
            "reranker",
            json!({"op": "rerank", "query": query, "candidates": candidates}),
        )?;
        Ok(r.scores)
    }
}

impl Assessor for CommandProvider {
    fn assess(&self, opinion: &str, fact: &str) -> ProviderResult<AssessLabel> {
        let r: Label = self.call(
            "assessor",
            json!({"op": "assess", "opinion": opinion, "fact": fact}),
        )?;
        Ok(r.label)
    }
}

impl Synthesizer for CommandProvider {
    fn observations(&self, entity_name: &str, facts: &[String]) -> ProviderResult<Vec<String>> {
        let r: Observations = self.call(
            "synthesizer",
            json!({"op": "observations", "entity": entity_name, "facts": facts}),
        )?;
        Ok(r.observations.into_iter().map(|o| o.observation).collect())
    }

    fn merge_background(&self, current: &str, snippet: &str) -> ProviderResult<String> {
        let r: Background = self.call(
            "synthesizer",
            json!({"op": "merge", "current": current, "snippet": snippet}),
        )?;
        Ok(r.background)
    }

    fn reflect(&self, request: &ReflectRequest) -> ProviderResult<ReflectOutput> {
        let mut req = serde_json::to_value(request).expect("request serializes");
        req["op"] = json!("reflect");
        self.call("synthesizer", req)
    }

    fn revise_opinion(&self, opinion: &str, fact: &str) -> ProviderResult<String> {
        let r: Revised = self.call(
            "synthesizer",
            json!({"op": "revise", "opinion": opinion, "fact": fact}),
        )?;
        Ok(r.opinion)
    }
}

impl TemporalFallback for CommandProvider {
    fn resolve(&self, query: &str, now: Timestamp) -> ProviderResult<Option<(Timestamp, Timestamp)>> {
        let r: Option<Range> = self.call(
            "temporal_fallback",
            json!({"op": "temporal", "query": query, "now": now}),
        )?;
        Ok(r.map(|r| (r.start, r.end)))
    }
}
