//! `--pretty` output.

use membank_core::dispatch::{ResponseEnvelope, Verb};
use serde_json::Value;

fn s(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn render_recall(r: &Value, out: &mut Vec<String>) {
    let items = r["items"].as_array().cloned().unwrap_or_default();
    out.push(format!(
        "{} memories, {} of {} tokens{}",
        items.len(),
        s(&r["total_tokens"]),
        s(&r["budget"]),
        if r["rerank_fallback"].as_bool() == Some(true) {
            " (reranker unavailable, fused order)"
        } else {
            ""
        }
    ));
    for (i, it) in items.iter().enumerate() {
        let channels: Vec<String> = it["channels_hit"]
            .as_array()
            .map(|a| a.iter().map(s).collect())
            .unwrap_or_default();
        out.push(format!(
            "{:>3}. {} ({}) {}",
            i + 1,
            s(&it["unit_id"]),
            s(&it["network"]),
            s(&it["text"])
        ));
        out.push(format!(
            "       fused {:.5}  rerank {}  via {}",
            it["fused_score"].as_f64().unwrap_or(0.0),
            it["rerank_score"]
                .as_f64()
                .map_or("-".into(), |x| format!("{x:.3}")),
            channels.join(",")
        ));
    }
    if let Some(lists) = r["explain"]["lists"].as_array() {
        for l in lists {
            let ids: Vec<String> = l["entries"]
                .as_array()
                .map(|a| a.iter().take(10).map(|e| s(&e["unit_id"])).collect())
                .unwrap_or_default();
            out.push(format!("  {:<9} {}", s(&l["channel"]), ids.join(" ")));
        }
    }
}

fn render_reflect(r: &Value, out: &mut Vec<String>) {
    if r.get("system_message_used").is_some() {
        out.push(format!("system: {}", s(&r["system_message_used"])));
    }
    out.push(s(&r["response_text"]));
    for o in r["opinions_formed"].as_array().into_iter().flatten() {
        out.push(format!(
            "  + opinion {} ({:.2}) {}",
            s(&o["unit_id"]),
            o["confidence"].as_f64().unwrap_or(0.0),
            s(&o["text"])
        ));
    }
    for u in r["opinions_updated"].as_array().into_iter().flatten() {
        out.push(format!(
            "  ~ opinion {} {:.2} -> {:.2}",
            s(&u["opinion_id"]),
            u["old_confidence"].as_f64().unwrap_or(0.0),
            u["new_confidence"].as_f64().unwrap_or(0.0)
        ));
    }
    for d in r["opinions_dropped"].as_array().into_iter().flatten() {
        out.push(format!("  - dropped: {}", s(&d["reason"])));
    }
}

fn render_inspect(r: &Value, out: &mut Vec<String>) {
    out.push(format!(
        "bank {} ({})",
        s(&r["bank_id"]),
        s(&r["profile"]["name"])
    ));
    if let Some(m) = r["units_by_network"].as_object() {
        let parts: Vec<String> = m.iter().map(|(k, v)| format!("{k}={v}")).collect();
        out.push(format!("  units: {}", parts.join(" ")));
    }
    if let Some(m) = r["edges_by_kind"].as_object() {
        let parts: Vec<String> = m.iter().map(|(k, v)| format!("{k}={v}")).collect();
        out.push(format!("  edges: {}", parts.join(" ")));
    }
    let entities = r["entities"].as_array().cloned().unwrap_or_default();
    out.push(format!("  entities: {}", entities.len()));
    for e in &entities {
        out.push(format!(
            "    {} {} [{}] x{}",
            s(&e["id"]),
            s(&e["canonical_name"]),
            s(&e["kind"]),
            s(&e["mention_count"])
        ));
    }
    if let Some(ops) = r["opinions"].as_array() {
        out.push(format!("  opinions: {}", ops.len()));
        for o in ops {
            out.push(format!(
                "    {} ({:.2}, formed {}) {}",
                s(&o["unit_id"]),
                o["confidence"].as_f64().unwrap_or(0.0),
                s(&o["formed_at"]),
                s(&o["text"])
            ));
        }
    }
}

pub fn render(resp: &ResponseEnvelope) -> String {
    let mut out = Vec::new();
    if let Some(err) = &resp.error {
        out.push(format!("error ({}): {}", err.kind, err.message));
        for v in &err.violations {
            out.push(format!("  - {v}"));
        }
        return out.join("\n");
    }
    let r = &resp.result;
    match resp.verb {
        Verb::Recall => render_recall(r, &mut out),
        Verb::Reflect => render_reflect(r, &mut out),
        Verb::Inspect => render_inspect(r, &mut out),
        Verb::Retain => {
            let ids: Vec<String> = r["fact_ids"]
                .as_array()
                .map(|a| a.iter().map(s).collect())
                .unwrap_or_default();
            out.push(format!("retained {} facts: {}", ids.len(), ids.join(" ")));
            out.push(format!(
                "  new entities: {}",
                r["new_entities"].as_array().map_or(0, Vec::len)
            ));
            out.push(format!("  edges: {}", r["edges_created"]));
            out.push(format!(
                "  opinions updated: {}",
                r["opinions_updated"].as_array().map_or(0, Vec::len)
            ));
        }
        _ => out.push(serde_json::to_string_pretty(r).expect("value serializes")),
    }
    out.join("\n")
}
