//! Command envelope shared by the CLI and the HTTP front end.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::EngineConfig;
use crate::engine::{Engine, ProfileUpdate};
use crate::error::{Error, ErrorKind, Result};
use crate::model::{BankId, BankProfile, BehavioralProfile};
use crate::recall::RecallOptions;
use crate::retain::RetainRequest;

pub const DEFAULT_RECALL_BUDGET: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verb {
    CreateBank,
    Configure,
    Retain,
    Recall,
    Reflect,
    Inspect,
    Export,
    Import,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandEnvelope {
    pub verb: Verb,
    #[serde(default)]
    pub bank_id: Option<BankId>,
    #[serde(default)]
    pub payload: Value,
    /// Per-request config keys layered over the engine config.
    #[serde(default)]
    pub config_overrides: Map<String, Value>,
}

impl CommandEnvelope {
    pub fn new(verb: Verb, bank_id: Option<BankId>, payload: Value) -> Self {
        Self {
            verb,
            bank_id,
            payload,
            config_overrides: Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseEnvelope {
    pub ok: bool,
    pub verb: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank_id: Option<BankId>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub result: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    pub effective_config: EngineConfig,
    #[serde(skip)]
    pub error_kind: Option<ErrorKind>,
}

pub fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Validation => "validation",
        ErrorKind::Provider => "provider",
        ErrorKind::Storage => "storage",
        ErrorKind::NotFound => "not_found",
        ErrorKind::Conflict => "conflict",
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreatePayload {
    name: Option<String>,
    #[serde(default)]
    profile: Option<BehavioralProfile>,
    #[serde(default)]
    background: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecallPayload {
    query: String,
    #[serde(default)]
    budget: Option<usize>,
    #[serde(default)]
    explain: bool,
    #[serde(default)]
    graph: Option<bool>,
    #[serde(default)]
    keyword: Option<bool>,
    #[serde(default)]
    temporal: Option<bool>,
    #[serde(default)]
    rerank: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReflectPayload {
    query: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InspectPayload {
    #[serde(default)]
    opinions: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportPayload {
    snapshot: String,
    #[serde(default)]
    replace: bool,
}

fn payload<T: DeserializeOwned>(v: &Value) -> Result<T> {
    let v = if v.is_null() {
        Value::Object(Map::new())
    } else {
        v.clone()
    };
    serde_json::from_value(v).map_err(|e| Error::Validation(vec![format!("payload: {e}")]))
}

/// Engine config with `overrides` applied. The embedding dimension is fixed
/// per engine and cannot be overridden.
pub fn effective_config(base: &EngineConfig, overrides: &Map<String, Value>) -> Result<EngineConfig> {
    if overrides.is_empty() {
        return Ok(base.clone());
    }
    if overrides.contains_key("embedding_dim") {
        return Err(Error::Validation(vec![
            "embedding_dim cannot be overridden per request".into(),
        ]));
    }
    apply_overrides(base, overrides)
}

/// Layers `overrides` over `base` and validates the result.
pub fn apply_overrides(base: &EngineConfig, overrides: &Map<String, Value>) -> Result<EngineConfig> {
    let mut merged = serde_json::to_value(base).expect("config serializes");
    let obj = merged.as_object_mut().expect("config is an object");
    for (k, v) in overrides {
        obj.insert(k.clone(), v.clone());
    }
    let cfg: EngineConfig = serde_json::from_value(merged)
        .map_err(|e| Error::Validation(vec![format!("config_overrides: {e}")]))?;
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(cfg)
}

fn bank_id(env: &CommandEnvelope) -> Result<BankId> {
    env.bank_id
        .clone()
        .ok_or_else(|| Error::Validation(vec!["bank_id is required".into()]))
}

fn to_value<T: Serialize>(v: T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn run(engine: &Engine, env: &CommandEnvelope, cfg: &EngineConfig) -> Result<(Option<BankId>, Value)> {
    match env.verb {
        Verb::CreateBank => {
            let id = bank_id(env)?;
            let p: CreatePayload = payload(&env.payload)?;
            let mut profile = BankProfile::new(p.name.unwrap_or_else(|| id.to_string()));
            if let Some(bp) = p.profile {
                profile.profile = bp;
            }
            if let Some(bg) = p.background {
                profile.background = bg;
            }
            let out = engine.create_bank(&id, profile)?;
            Ok((Some(id), to_value(out)))
        }
        Verb::Configure => {
            let id = bank_id(env)?;
            let update: ProfileUpdate = payload(&env.payload)?;
            let out = engine.configure_bank(&id, &update)?;
            Ok((Some(id), to_value(out)))
        }
        Verb::Retain => {
            let id = bank_id(env)?;
            let req: RetainRequest = payload(&env.payload)?;
            let out = engine.retain_with(&id, &req, cfg)?;
            Ok((Some(id), to_value(out)))
        }
        Verb::Recall => {
            let id = bank_id(env)?;
            let p: RecallPayload = payload(&env.payload)?;
            let d = RecallOptions::default();
            let options = RecallOptions {
                graph: p.graph.unwrap_or(d.graph),
                keyword: p.keyword.unwrap_or(d.keyword),
                temporal: p.temporal.unwrap_or(d.temporal),
                rerank: p.rerank.unwrap_or(d.rerank),
                explain: p.explain,
            };
            let budget = p.budget.unwrap_or(DEFAULT_RECALL_BUDGET);
            let out = engine.recall_with(&id, &p.query, budget, options, cfg)?;
            Ok((Some(id), to_value(out)))
        }
        Verb::Reflect => {
            let id = bank_id(env)?;
            let p: ReflectPayload = payload(&env.payload)?;
            let out = engine.reflect_with(&id, &p.query, cfg)?;
            Ok((Some(id), to_value(out)))
        }
        Verb::Inspect => {
            let id = bank_id(env)?;
            let p: InspectPayload = payload(&env.payload)?;
            let out = engine.inspect(&id, p.opinions)?;
            Ok((Some(id), to_value(out)))
        }
        Verb::Export => {
            let id = bank_id(env)?;
            let snapshot = engine.export(&id)?;
            Ok((Some(id), serde_json::json!({ "snapshot": snapshot })))
        }
        Verb::Import => {
            let p: ImportPayload = payload(&env.payload)?;
            let id = engine.import(&p.snapshot, p.replace)?;
            Ok((Some(id.clone()), serde_json::json!({ "bank_id": id })))
        }
    }
}

/// Executes one command. Never fails: errors are reported in the envelope.
pub fn dispatch(engine: &Engine, env: &CommandEnvelope) -> ResponseEnvelope {
    let outcome = effective_config(engine.config(), &env.config_overrides)
        .and_then(|cfg| run(engine, env, &cfg).map(|r| (r, cfg)));
    match outcome {
        Ok(((bank_id, result), cfg)) => ResponseEnvelope {
            ok: true,
            verb: env.verb,
            bank_id,
            result,
            error: None,
            effective_config: cfg,
            error_kind: None,
        },
        Err(err) => {
            let kind = err.kind();
            ResponseEnvelope {
                ok: false,
                verb: env.verb,
                bank_id: env.bank_id.clone(),
                result: Value::Null,
                error: Some(ErrorBody {
                    kind: kind_name(kind).into(),
                    message: err.to_string(),
                    violations: err.violations(),
                }),
                effective_config: engine.config().clone(),
                error_kind: Some(kind),
            }
        }
    }
}
