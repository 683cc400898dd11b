use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn membank(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_membank"))
        .arg("--data-dir")
        .arg(data)
        .args(["--now", "2024-07-01T12:00:00Z"])
        .args(args)
        .env_remove("MEMBANK_CONFIG")
        .env_remove("MEMBANK_PROVIDER_COMMAND")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

const TRANSCRIPT: &str = r#"{"speaker":"user","text":"I adopted a beagle named Biscuit in Denver.","timestamp":"2024-06-08T10:00:00Z"}
{"speaker":"assistant","text":"Congratulations on Biscuit!","timestamp":"2024-06-08T10:01:00Z"}
"#;

#[test]
fn create_retain_recall_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = membank(
        &data,
        &[
            "bank",
            "create",
            "--bank",
            "pets",
            "--name",
            "Pets",
            "--skepticism",
            "4",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["ok"], true);

    let transcript = dir.path().join("t.jsonl");
    std::fs::write(&transcript, TRANSCRIPT).unwrap();
    let out = membank(
        &data,
        &["retain", "--bank", "pets", "--file", transcript.to_str().unwrap()],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!json(&out)["result"]["fact_ids"].as_array().unwrap().is_empty());

    let out = membank(
        &data,
        &["recall", "--bank", "pets", "--query", "Biscuit", "--budget", "50"],
    );
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let items = v["result"]["items"].as_array().unwrap();
    assert!(
        items
            .iter()
            .any(|i| i["text"].as_str().unwrap().contains("Biscuit")),
        "{v}"
    );
    assert!(v["result"]["total_tokens"].as_u64().unwrap() <= 50);

    let out = membank(&data, &["inspect", "--bank", "pets"]);
    assert_eq!(json(&out)["result"]["profile"]["profile"]["skepticism"], 4);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    let out = membank(data, &["recall", "--bank", "nobody", "--query", "x"]);
    assert_eq!(out.status.code(), Some(6));
    assert_eq!(json(&out)["error"]["kind"], "not_found");

    assert_eq!(
        membank(data, &["bank", "create", "--bank", "b"]).status.code(),
        Some(0)
    );
    let out = membank(data, &["bank", "create", "--bank", "b"]);
    assert_eq!(out.status.code(), Some(7));

    let out = membank(data, &["bank", "configure", "--bank", "b", "--bias", "3"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!json(&out)["error"]["violations"].as_array().unwrap().is_empty());

    assert_eq!(membank(data, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        membank(
            data,
            &["--set", "rrf_k=0", "recall", "--bank", "b", "--query", "x"]
        )
        .status
        .code(),
        Some(3)
    );
}

#[test]
fn malformed_transcript_leaves_the_bank_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(
        membank(&data, &["bank", "create", "--bank", "safe"])
            .status
            .code(),
        Some(0)
    );
    let snapshot = data.join("safe.jsonl");
    let before = std::fs::read(&snapshot).unwrap();

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"speaker\":\"user\",\"text\":\"ok\",\"timestamp\":\"2024-01-01T00:00:00Z\"}\nnot json\n",
    )
    .unwrap();
    let out = membank(
        &data,
        &["retain", "--bank", "safe", "--file", bad.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(3));
    let v = json(&out);
    assert!(
        v["error"]["violations"][0]
            .as_str()
            .unwrap()
            .starts_with("line 2"),
        "{v}"
    );
    assert_eq!(std::fs::read(&snapshot).unwrap(), before);
}

#[test]
fn dispatch_reads_an_envelope_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("cmd.json");
    std::fs::write(
        &env,
        r#"{"verb":"create-bank","bank_id":"d","payload":{"name":"D"}}"#,
    )
    .unwrap();
    let out = membank(dir.path(), &["dispatch", "--file", env.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["verb"], "create-bank");
    assert_eq!(v["effective_config"]["rrf_k"], 60);
}

#[test]
fn export_and_import_move_a_bank() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    membank(&a, &["bank", "create", "--bank", "mover"]);
    let file = dir.path().join("mover.snapshot");
    let out = membank(
        &a,
        &[
            "bank",
            "export",
            "--bank",
            "mover",
            "--out",
            file.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let out = membank(&b, &["bank", "import", "--file", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        membank(&b, &["inspect", "--bank", "mover"]).status.code(),
        Some(0)
    );
    let again = membank(&b, &["bank", "import", "--file", file.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(7));
}
