//! HTTP front end over the shared dispatch layer.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use membank_core::dispatch::{dispatch, CommandEnvelope, ErrorBody, ResponseEnvelope, Verb};
use membank_core::model::BankId;
use membank_core::{Engine, ErrorKind};
use serde_json::{Map, Value};

pub fn status_for(kind: Option<ErrorKind>) -> StatusCode {
    match kind {
        None => StatusCode::OK,
        Some(ErrorKind::Validation) => StatusCode::BAD_REQUEST,
        Some(ErrorKind::NotFound) => StatusCode::NOT_FOUND,
        Some(ErrorKind::Conflict) => StatusCode::CONFLICT,
        Some(ErrorKind::Provider) => StatusCode::BAD_GATEWAY,
        Some(ErrorKind::Storage) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn respond(resp: ResponseEnvelope) -> Response {
    (status_for(resp.error_kind), Json(resp)).into_response()
}

fn bad_request(engine: &Engine, verb: Verb, bank_id: Option<BankId>, message: String) -> Response {
    respond(ResponseEnvelope {
        ok: false,
        verb,
        bank_id,
        result: Value::Null,
        error: Some(ErrorBody {
            kind: "validation".into(),
            message: message.clone(),
            violations: vec![message],
        }),
        effective_config: engine.config().clone(),
        error_kind: Some(ErrorKind::Validation),
    })
}

/// Engine calls block, so they run on the blocking pool.
async fn run(engine: Arc<Engine>, env: CommandEnvelope) -> Response {
    match tokio::task::spawn_blocking(move || dispatch(&engine, &env)).await {
        Ok(resp) => respond(resp),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

/// Splits a request body into payload and optional `config_overrides`.
fn split_body(body: &[u8]) -> Result<(Value, Map<String, Value>), String> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok((Value::Object(Map::new()), Map::new()));
    }
    let mut v: Value = serde_json::from_slice(body).map_err(|e| format!("body: {e}"))?;
    let Some(obj) = v.as_object_mut() else {
        return Err("body must be a JSON object".into());
    };
    let overrides = match obj.remove("config_overrides") {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(m)) => m,
        Some(_) => return Err("config_overrides must be an object".into()),
    };
    Ok((v, overrides))
}

async fn bank_verb(engine: Arc<Engine>, verb: Verb, id: String, body: Bytes) -> Response {
    let bank = BankId::new(id);
    match split_body(&body) {
        Ok((payload, config_overrides)) => {
            let env = CommandEnvelope {
                verb,
                bank_id: Some(bank),
                payload,
                config_overrides,
            };
            run(engine, env).await
        }
        Err(msg) => bad_request(&engine, verb, Some(bank), msg),
    }
}

async fn create_bank(State(engine): State<Arc<Engine>>, body: Bytes) -> Response {
    let (mut payload, config_overrides) = match split_body(&body) {
        Ok(x) => x,
        Err(msg) => return bad_request(&engine, Verb::CreateBank, None, msg),
    };
    let id = payload.as_object_mut().and_then(|o| o.remove("bank_id"));
    let Some(Value::String(id)) = id else {
        return bad_request(
            &engine,
            Verb::CreateBank,
            None,
            "bank_id (string) is required".into(),
        );
    };
    let env = CommandEnvelope {
        verb: Verb::CreateBank,
        bank_id: Some(BankId::new(id)),
        payload,
        config_overrides,
    };
    run(engine, env).await
}

async fn retain(State(e): State<Arc<Engine>>, Path(id): Path<String>, body: Bytes) -> Response {
    bank_verb(e, Verb::Retain, id, body).await
}

async fn recall(State(e): State<Arc<Engine>>, Path(id): Path<String>, body: Bytes) -> Response {
    bank_verb(e, Verb::Recall, id, body).await
}

async fn reflect(State(e): State<Arc<Engine>>, Path(id): Path<String>, body: Bytes) -> Response {
    bank_verb(e, Verb::Reflect, id, body).await
}

async fn configure(State(e): State<Arc<Engine>>, Path(id): Path<String>, body: Bytes) -> Response {
    bank_verb(e, Verb::Configure, id, body).await
}

async fn inspect(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    let opinions = matches!(q.get("opinions").map(String::as_str), Some("true" | "1" | ""));
    let env = CommandEnvelope::new(
        Verb::Inspect,
        Some(BankId::new(id)),
        serde_json::json!({ "opinions": opinions }),
    );
    run(engine, env).await
}

async fn export(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> Response {
    run(
        engine,
        CommandEnvelope::new(Verb::Export, Some(BankId::new(id)), Value::Null),
    )
    .await
}

/// Accepts a full command envelope, exactly as the CLI `dispatch` verb does.
async fn raw_dispatch(State(engine): State<Arc<Engine>>, body: Bytes) -> Response {
    match serde_json::from_slice::<CommandEnvelope>(&body) {
        Ok(env) => run(engine, env).await,
        Err(e) => bad_request(&engine, Verb::Inspect, None, format!("envelope: {e}")),
    }
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/banks", post(create_bank))
        .route("/banks/:id/retain", post(retain))
        .route("/banks/:id/recall", post(recall))
        .route("/banks/:id/reflect", post(reflect))
        .route("/banks/:id/configure", post(configure))
        .route("/banks/:id/inspect", get(inspect))
        .route("/banks/:id/export", get(export))
        .route("/dispatch", post(raw_dispatch))
        .with_state(engine)
}

pub fn serve(engine: Arc<Engine>, addr: &str) -> anyhow::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!(addr, "listening");
        eprintln!("membank listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(engine)).await?;
        Ok(())
    })
}
