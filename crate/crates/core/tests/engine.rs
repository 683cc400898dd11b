mod common;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::thread;

use common::{small_config, ts, turn};
use membank_core::engine::ProfileUpdate;
use membank_core::model::{BankId, BankProfile, Network};
use membank_core::providers::mock::{
    MockAssessor, MockEmbedder, MockExtractor, MockReranker, MockSynthesizer,
};
use membank_core::providers::{CandidateOpinion, ProviderSuite};
use membank_core::recall::RecallOptions;
use membank_core::retain::RetainRequest;
use membank_core::{Engine, EngineConfig, ErrorKind, FixedClock};

fn engine(cfg: EngineConfig) -> Engine {
    Engine::builder(cfg)
        .clock(Arc::new(FixedClock::new(ts("2024-07-01T12:00:00Z"))))
        .build()
        .unwrap()
}

fn with_bank(cfg: EngineConfig) -> (Engine, BankId) {
    let e = engine(cfg);
    let id = BankId::new("main");
    e.create_bank(&id, BankProfile::new("Main")).unwrap();
    (e, id)
}

fn say(text: &str, at: &str) -> RetainRequest {
    RetainRequest::new(vec![turn("user", text, at)])
}

fn synthesizer_with(opinions: &[&str], cfg: &EngineConfig) -> ProviderSuite {
    let candidates = opinions
        .iter()
        .map(|o| CandidateOpinion {
            opinion: o.to_string(),
            confidence: None,
            reasoning: String::new(),
        })
        .collect();
    ProviderSuite::new(
        Arc::new(MockExtractor::default()),
        Arc::new(MockEmbedder::new(cfg.embedding_dim)),
        Arc::new(MockReranker::default()),
        Arc::new(MockAssessor::default()),
        Arc::new(MockSynthesizer::default().with_opinions(candidates)),
    )
}

#[test]
fn create_rejects_duplicates_and_bad_ids() {
    let (e, id) = with_bank(small_config());
    let err = e.create_bank(&id, BankProfile::new("Again")).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Conflict);
    let err = e
        .create_bank(&BankId::new("has space"), BankProfile::new("X"))
        .unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Validation);
    let err = e
        .create_bank(&BankId::new("blank"), BankProfile::new(""))
        .unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Validation);
    assert_eq!(e.bank_ids(), vec![id]);
}

#[test]
fn configure_validates_before_applying() {
    let (e, id) = with_bank(small_config());
    let bad: ProfileUpdate = serde_json::from_str(r#"{"skepticism": 9}"#).unwrap();
    let err = e.configure_bank(&id, &bad).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Validation);
    assert!(
        err.violations().iter().any(|v| v.contains("skepticism")),
        "{:?}",
        err.violations()
    );
    assert_eq!(e.inspect(&id, false).unwrap().profile.profile.skepticism, 3);

    let good: ProfileUpdate = serde_json::from_str(r#"{"skepticism": 5, "bias": 0.9}"#).unwrap();
    let p = e.configure_bank(&id, &good).unwrap();
    assert_eq!(p.profile.skepticism, 5);
    assert_eq!(p.profile.bias_strength, 0.9);
    assert!(serde_json::from_str::<ProfileUpdate>(r#"{"mood": 1}"#).is_err());
}

#[test]
fn unknown_bank_is_not_found() {
    let e = engine(small_config());
    let ghost = BankId::new("ghost");
    assert_eq!(
        e.recall(&ghost, "x", 10, RecallOptions::default())
            .unwrap_err()
            .kind(),
        ErrorKind::NotFound
    );
    assert_eq!(e.reflect(&ghost, "x").unwrap_err().kind(), ErrorKind::NotFound);
    assert_eq!(
        e.retain(&ghost, &say("Hi", "2024-01-01T00:00:00Z"))
            .unwrap_err()
            .kind(),
        ErrorKind::NotFound
    );
}

#[test]
fn banks_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let before = {
        let e = Engine::builder(cfg.clone()).data_dir(dir.path()).build().unwrap();
        let id = BankId::new("disk");
        e.create_bank(&id, BankProfile::new("Disk")).unwrap();
        e.retain(
            &id,
            &say("Alice Chen moved to Lisbon in spring.", "2024-04-02T09:00:00Z"),
        )
        .unwrap();
        e.retain(
            &id,
            &say("Alice Chen adopted a cat named Miso.", "2024-04-09T09:00:00Z"),
        )
        .unwrap();
        e.flush_background();
        e.export(&id).unwrap()
    };
    assert!(dir.path().join("disk.jsonl").exists());
    let e = Engine::builder(cfg).data_dir(dir.path()).build().unwrap();
    assert_eq!(e.export(&BankId::new("disk")).unwrap(), before);
}

#[test]
fn reload_rejects_a_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    {
        let e = Engine::builder(small_config())
            .data_dir(dir.path())
            .build()
            .unwrap();
        e.create_bank(&BankId::new("d"), BankProfile::new("D")).unwrap();
    }
    let cfg = EngineConfig {
        embedding_dim: 32,
        ..small_config()
    };
    assert!(Engine::builder(cfg).data_dir(dir.path()).build().is_err());
}

#[test]
fn observations_appear_after_flush() {
    let (e, id) = with_bank(EngineConfig {
        background_observations: true,
        ..small_config()
    });
    e.retain(
        &id,
        &say(
            "Maria Lopez teaches chemistry at Northside High.",
            "2024-03-01T10:00:00Z",
        ),
    )
    .unwrap();
    e.flush_background();
    let report = e.inspect(&id, false).unwrap();
    assert!(report.units_by_network[&Network::Observation] > 0, "{report:?}");
    let texts: Vec<String> = e
        .snapshot(&id)
        .unwrap()
        .units()
        .filter(|u| u.network == Network::Observation)
        .map(|u| u.text.clone())
        .collect();
    assert!(texts.iter().any(|t| t.starts_with("Maria Lopez:")), "{texts:?}");
}

#[test]
fn inline_and_background_observations_agree() {
    let run = |background: bool| {
        let (e, id) = with_bank(EngineConfig {
            background_observations: background,
            ..small_config()
        });
        for (i, text) in [
            "Kenji Sato plays the cello.",
            "Kenji Sato joined the Osaka quartet.",
        ]
        .iter()
        .enumerate()
        {
            e.retain(&id, &say(text, &format!("2024-02-0{}T10:00:00Z", i + 1)))
                .unwrap();
        }
        e.flush_background();
        e.export(&id).unwrap()
    };
    assert_eq!(run(true), run(false));
}

#[test]
fn concurrent_retains_are_serialized() {
    let (e, id) = with_bank(small_config());
    let e = Arc::new(e);
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let e = e.clone();
            let id = id.clone();
            thread::spawn(move || {
                let at = format!("2024-05-{:02}T08:00:00Z", i + 1);
                e.retain(
                    &id,
                    &say(&format!("Runner {i} finished lap {i} at the Velodrome."), &at),
                )
                .unwrap()
            })
        })
        .collect();
    let receipts: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    e.flush_background();
    let ids: BTreeSet<_> = receipts.iter().flat_map(|r| r.fact_ids.iter().copied()).collect();
    let total: usize = receipts.iter().map(|r| r.fact_ids.len()).sum();
    assert_eq!(ids.len(), total, "fact ids must be unique across writers");
    let bank = e.snapshot(&id).unwrap();
    let facts = bank.units().filter(|u| u.network != Network::Observation).count();
    assert_eq!(facts, total);
    for fid in &ids {
        assert!(bank.unit(*fid).is_some());
    }
}

#[test]
fn recall_with_zero_budget_is_empty() {
    let (e, id) = with_bank(small_config());
    e.retain(
        &id,
        &say("Priya Nair runs the Oslo marathon.", "2024-06-01T07:00:00Z"),
    )
    .unwrap();
    let r = e.recall(&id, "marathon", 0, RecallOptions::default()).unwrap();
    assert!(r.items.is_empty());
    assert_eq!(r.total_tokens, 0);
    let r = e.recall(&id, "marathon", 1000, RecallOptions::default()).unwrap();
    assert!(!r.items.is_empty());
    assert!(r.total_tokens <= 1000);
}

#[test]
fn relative_dates_use_the_engine_clock() {
    let (e, id) = with_bank(small_config());
    e.retain(&id, &say("I baked sourdough with Tomas.", "2024-06-30T18:00:00Z"))
        .unwrap();
    e.retain(&id, &say("I repaired the bike chain.", "2024-06-20T18:00:00Z"))
        .unwrap();
    let r = e
        .recall(&id, "What did I do yesterday?", 200, RecallOptions::default())
        .unwrap();
    let range = r.temporal_range_used.expect("yesterday resolves");
    assert_eq!(range.0, ts("2024-06-30T00:00:00Z"));
    assert!(r.items[0].text.contains("sourdough"), "{:?}", r.items);
}

#[test]
fn reflect_forms_then_reinforces_opinions() {
    let cfg = small_config();
    let e = Engine::builder(cfg.clone())
        .providers(synthesizer_with(
            &["I think Lisbon suits Alice Chen", "Lisbon is sunny"],
            &cfg,
        ))
        .clock(Arc::new(FixedClock::new(ts("2024-07-01T12:00:00Z"))))
        .build()
        .unwrap();
    let id = BankId::new("r");
    e.create_bank(&id, BankProfile::new("R")).unwrap();

    let empty = e.reflect(&id, "What about Alice?").unwrap();
    assert!(
        empty.opinions_formed.is_empty(),
        "nothing recalled, nothing formed"
    );

    e.retain(&id, &say("Alice Chen moved to Lisbon.", "2024-04-02T09:00:00Z"))
        .unwrap();
    let first = e.reflect(&id, "Where does Alice Chen live?").unwrap();
    assert_eq!(first.opinions_formed.len(), 1);
    assert_eq!(
        first.opinions_formed[0].confidence,
        cfg.default_opinion_confidence
    );
    assert_eq!(
        first.opinions_dropped.len(),
        1,
        "third-person candidate is dropped"
    );
    assert!(!first.system_message_used.is_empty());

    let second = e.reflect(&id, "Where does Alice Chen live?").unwrap();
    assert!(second.opinions_formed.is_empty());
    assert_eq!(second.opinions_updated.len(), 1);
    assert_eq!(second.opinions_updated[0].new_confidence, 0.7);
    let opinions = e.inspect(&id, true).unwrap().opinions.unwrap();
    assert_eq!(opinions.len(), 1);
    assert_eq!(opinions[0].confidence, 0.7);
}

#[test]
fn biographical_retain_merges_background() {
    let (e, id) = with_bank(small_config());
    let mut req = say("I was born in Texas and studied physics.", "2024-01-05T10:00:00Z");
    req.biographical = true;
    let receipt = e.retain(&id, &req).unwrap();
    assert!(receipt.background_changed);
    let bg = e.inspect(&id, false).unwrap().profile.background;
    assert!(bg.contains("born in Texas"), "{bg}");
}

#[test]
fn import_requires_replace_for_existing_banks() {
    let (e, id) = with_bank(small_config());
    e.retain(&id, &say("Oslo hosts the winter fair.", "2024-01-10T10:00:00Z"))
        .unwrap();
    let snap = e.export(&id).unwrap();
    assert_eq!(e.import(&snap, false).unwrap_err().kind(), ErrorKind::Conflict);
    assert_eq!(e.import(&snap, true).unwrap(), id);

    let other = engine(EngineConfig {
        embedding_dim: 32,
        ..small_config()
    });
    assert_eq!(
        other.import(&snap, false).unwrap_err().kind(),
        ErrorKind::Validation
    );
    let fresh = engine(small_config());
    fresh.import(&snap, false).unwrap();
    assert_eq!(fresh.export(&id).unwrap(), snap);
}
