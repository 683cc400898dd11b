//! Deterministic offline providers.
//!
//! Each mock is a pure function of its inputs (apart from an optional
//! [`FaultPlan`] used to inject failures in tests).

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use super::{
    AssessLabel, Assessor, CandidateOpinion, Embedder, EntityMention, ExtractedFact, FactExtractor, FactType,
    ProviderResult, ReflectOutput, ReflectRequest, Reranker, Synthesizer, Turn,
};
use crate::error::ProviderError;
use crate::model::EntityKind;
use crate::text::{sentences, tokenize, truncate_chars};
use crate::time::day_phrase;

/// Failure schedule shared between a mock and the test driving it.
/// Call indices are zero-based.
#[derive(Debug, Default)]
pub struct FaultPlan {
    calls: AtomicUsize,
    fail_on: Mutex<BTreeSet<usize>>,
    fail_from: Option<usize>,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn always() -> Self {
        Self::fail_from(0)
    }

    pub fn fail_from(n: usize) -> Self {
        Self {
            fail_from: Some(n),
            ..Self::default()
        }
    }

    pub fn fail_calls(calls: impl IntoIterator<Item = usize>) -> Self {
        Self {
            fail_on: Mutex::new(calls.into_iter().collect()),
            ..Self::default()
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn check(&self, provider: &str) -> ProviderResult<()> {
        let i = self.calls.fetch_add(1, Ordering::SeqCst);
        let fail = self.fail_from.is_some_and(|n| i >= n) || self.fail_on.lock().contains(&i);
        if fail {
            Err(ProviderError::call(
                provider,
                format!("injected failure on call {i}"),
            ))
        } else {
            Ok(())
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hashed bag-of-features embedder.
///
/// Features per case-folded token `t`: the word feature `w:t` and every
/// character trigram of `^t$` as `g:xyz`. A feature with FNV-1a hash `h`
/// adds `±1` to bucket `h % dim`, the sign taken from the top bit of `h`.
/// The result is L2-normalized.
#[derive(Debug, Default)]
pub struct MockEmbedder {
    dim: usize,
    faults: Arc<FaultPlan>,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            faults: Arc::default(),
        }
    }

    pub fn with_faults(mut self, faults: Arc<FaultPlan>) -> Self {
        self.faults = faults;
        self
    }

    /// The feature strings for `text`, with multiplicity.
    pub fn features(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for tok in tokenize(text) {
            out.push(format!("w:{tok}"));
            let padded: Vec<char> = format!("^{tok}$").chars().collect();
            for win in padded.windows(3) {
                out.push(format!("g:{}", win.iter().collect::<String>()));
            }
        }
        if out.is_empty() {
            out.push(format!("r:{}", text.trim()));
        }
        out
    }

    pub fn embed_text(&self, text: &str) -> ProviderResult<Vec<f64>> {
        if text.trim().is_empty() {
            return Err(ProviderError::call("embedder", "cannot embed empty text"));
        }
        let mut v = vec![0.0; self.dim];
        for f in Self::features(text) {
            let h = fnv1a(f.as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Every feature cancelled out; fall back to a fixed direction.
            v[(fnv1a(text.as_bytes()) % self.dim as u64) as usize] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, text: &str) -> ProviderResult<Vec<f64>> {
        self.faults.check("embedder")?;
        self.embed_text(text)
    }
}

const NON_ENTITY_CAPITALS: &[&str] = &[
    "a",
    "also",
    "an",
    "and",
    "april",
    "august",
    "awesome",
    "but",
    "cool",
    "december",
    "february",
    "friday",
    "good",
    "great",
    "he",
    "hello",
    "hey",
    "hi",
    "how",
    "i",
    "i'd",
    "i'll",
    "i'm",
    "i've",
    "it",
    "january",
    "july",
    "june",
    "march",
    "may",
    "monday",
    "my",
    "nice",
    "no",
    "noted",
    "november",
    "october",
    "ok",
    "okay",
    "our",
    "saturday",
    "september",
    "she",
    "so",
    "sorry",
    "sounds",
    "sunday",
    "sure",
    "thank",
    "thanks",
    "that",
    "the",
    "then",
    "they",
    "this",
    "thursday",
    "today",
    "tomorrow",
    "tuesday",
    "we",
    "wednesday",
    "well",
    "what",
    "when",
    "where",
    "who",
    "why",
    "wow",
    "yes",
    "yesterday",
    "you",
    "your",
];

const ORG_SUFFIXES: &[&str] = &["inc", "corp", "labs", "ltd", "llc", "university", "company"];

/// Runs of capitalized words, de-duplicated by surface text. Punctuation
/// between words ends a run; common sentence starters and calendar words
/// are not entities.
pub fn capitalized_runs(text: &str) -> Vec<EntityMention> {
    let mut runs: Vec<Vec<String>> = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    for raw in text.split_whitespace() {
        let word = raw.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'');
        let word = word
            .strip_suffix("'s")
            .or_else(|| word.strip_suffix("’s"))
            .unwrap_or(word);
        let breaks_after = raw.chars().last().is_some_and(|c| !c.is_alphanumeric());
        let is_cap = word.chars().next().is_some_and(char::is_uppercase)
            && !NON_ENTITY_CAPITALS.contains(&word.to_lowercase().as_str());
        if is_cap {
            cur.push(word.to_string());
        } else if !cur.is_empty() {
            runs.push(std::mem::take(&mut cur));
        }
        if breaks_after && !cur.is_empty() {
            runs.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        runs.push(cur);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for run in runs {
        let text = run.join(" ");
        if !seen.insert(text.clone()) {
            continue;
        }
        let last = run.last().map(|w| w.to_lowercase()).unwrap_or_default();
        let kind = if ORG_SUFFIXES.contains(&last.as_str()) {
            EntityKind::Organization
        } else {
            EntityKind::Other
        };
        out.push(EntityMention { text, kind });
    }
    out
}

/// Rule-based extractor: contiguous turns are grouped into
/// `clamp(ceil(n/2), 2, 5)` facts (one fact for a single turn).
#[derive(Debug, Default)]
pub struct MockExtractor {
    faults: Arc<FaultPlan>,
}

impl MockExtractor {
    pub fn with_faults(mut self, faults: Arc<FaultPlan>) -> Self {
        self.faults = faults;
        self
    }

    pub fn group_count(turns: usize) -> usize {
        match turns {
            0 => 0,
            1 => 1,
            n => n.div_ceil(2).clamp(2, 5),
        }
    }

    fn fact_for(group: &[Turn]) -> ExtractedFact {
        let what = group.iter().map(|t| t.text.trim()).collect::<Vec<_>>().join(" ");
        let speakers: Vec<&str> = group
            .iter()
            .map(|t| t.speaker.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let agent_only = group
            .iter()
            .all(|t| matches!(t.speaker.to_lowercase().as_str(), "assistant" | "agent" | "self"));
        let lower = what.to_lowercase();
        let fact_type = if ["i think", "i believe", "in my view"]
            .iter()
            .any(|p| lower.starts_with(p))
        {
            FactType::Opinion
        } else if agent_only {
            FactType::Experience
        } else {
            FactType::World
        };
        let start = group.iter().map(|t| t.timestamp).min().expect("non-empty group");
        let end = group.iter().map(|t| t.timestamp).max().expect("non-empty group");
        ExtractedFact {
            entities: capitalized_runs(&what),
            when: day_phrase(start),
            where_: String::new(),
            who: speakers.join(", "),
            why: String::new(),
            fact_type,
            occurred_start: Some(start),
            occurred_end: Some(end),
            mentioned_at: Some(end),
            causal_relations: Vec::new(),
            what,
        }
    }
}

impl FactExtractor for MockExtractor {
    fn extract(&self, turns: &[Turn]) -> ProviderResult<Vec<ExtractedFact>> {
        self.faults.check("extractor")?;
        if turns.is_empty() {
            return Err(ProviderError::call("extractor", "empty transcript"));
        }
        let n = turns.len();
        let k = Self::group_count(n);
        Ok((0..k)
            .map(|i| Self::fact_for(&turns[i * n / k..(i + 1) * n / k]))
            .collect())
    }

    fn mentions(&self, text: &str) -> ProviderResult<Vec<EntityMention>> {
        Ok(capitalized_runs(text))
    }
}

/// Returns the same scripted facts for every transcript.
#[derive(Debug, Default)]
pub struct ScriptedExtractor {
    facts: Vec<ExtractedFact>,
    faults: Arc<FaultPlan>,
}

impl ScriptedExtractor {
    pub fn new(facts: Vec<ExtractedFact>) -> Self {
        Self {
            facts,
            faults: Arc::default(),
        }
    }

    pub fn with_faults(mut self, faults: Arc<FaultPlan>) -> Self {
        self.faults = faults;
        self
    }
}

impl FactExtractor for ScriptedExtractor {
    fn extract(&self, turns: &[Turn]) -> ProviderResult<Vec<ExtractedFact>> {
        self.faults.check("extractor")?;
        if turns.is_empty() {
            return Err(ProviderError::call("extractor", "empty transcript"));
        }
        Ok(self.facts.clone())
    }

    fn mentions(&self, text: &str) -> ProviderResult<Vec<EntityMention>> {
        Ok(capitalized_runs(text))
    }
}

/// Score = fraction of distinct query tokens present in the candidate.
#[derive(Debug, Default)]
pub struct MockReranker {
    faults: Arc<FaultPlan>,
}

impl MockReranker {
    pub fn with_faults(mut self, faults: Arc<FaultPlan>) -> Self {
        self.faults = faults;
        self
    }

    pub fn overlap(query: &str, candidate: &str) -> f64 {
        let q: BTreeSet<String> = tokenize(query).into_iter().collect();
        if q.is_empty() {
            return 0.0;
        }
        let c: BTreeSet<String> = tokenize(candidate).into_iter().collect();
        q.intersection(&c).count() as f64 / q.len() as f64
    }
}

impl Reranker for MockReranker {
    fn score(&self, query: &str, candidate: &str) -> ProviderResult<f64> {
        Ok(Self::overlap(query, candidate))
    }

    fn score_batch(&self, query: &str, candidates: &[String]) -> ProviderResult<Vec<f64>> {
        self.faults.check("reranker")?;
        Ok(candidates.iter().map(|c| Self::overlap(query, c)).collect())
    }
}

/// Marker-keyword assessor: `supports:` reinforces, `refutes:` contradicts,
/// `doubts:` weakens; anything else is neutral.
#[derive(Debug)]
pub struct MockAssessor {
    pub supports: String,
    pub refutes: String,
    pub doubts: String,
    faults: Arc<FaultPlan>,
}

impl Default for MockAssessor {
    fn default() -> Self {
        Self {
            supports: "supports:".into(),
            refutes: "refutes:".into(),
            doubts: "doubts:".into(),
            faults: Arc::default(),
        }
    }
}

impl MockAssessor {
    pub fn with_faults(mut self, faults: Arc<FaultPlan>) -> Self {
        self.faults = faults;
        self
    }

    pub fn label(&self, fact: &str) -> AssessLabel {
        let f = fact.to_lowercase();
        if f.contains(&self.refutes) {
            AssessLabel::Contradict
        } else if f.contains(&self.doubts) {
            AssessLabel::Weaken
        } else if f.contains(&self.supports) {
            AssessLabel::Reinforce
        } else {
            AssessLabel::Neutral
        }
    }
}

impl Assessor for MockAssessor {
    fn assess(&self, _opinion: &str, fact: &str) -> ProviderResult<AssessLabel> {
        self.faults.check("assessor")?;
        Ok(self.label(fact))
    }
}

/// Template synthesizer.
///
/// * observations: one `"<entity>: <fact>"` line per fact, capped;
/// * background merge: sentence-level, a new sentence replaces an old one
///   sharing its first three words, otherwise it is appended; the result is
///   truncated to the length limit;
/// * reflect: echoes up to three memories and emits the scripted opinions
///   (none when nothing was recalled).
#[derive(Debug)]
pub struct MockSynthesizer {
    opinions: Vec<CandidateOpinion>,
    max_observations: usize,
    background_max_len: usize,
    faults: Arc<FaultPlan>,
}

impl Default for MockSynthesizer {
    fn default() -> Self {
        Self {
            opinions: Vec::new(),
            max_observations: 7,
            background_max_len: 500,
            faults: Arc::default(),
        }
    }
}

impl MockSynthesizer {
    pub fn with_opinions(mut self, opinions: Vec<CandidateOpinion>) -> Self {
        self.opinions = opinions;
        self
    }

    pub fn with_limits(mut self, max_observations: usize, background_max_len: usize) -> Self {
        self.max_observations = max_observations;
        self.background_max_len = background_max_len;
        self
    }

    pub fn with_faults(mut self, faults: Arc<FaultPlan>) -> Self {
        self.faults = faults;
        self
    }

    fn conflict_key(sentence: &str) -> Vec<String> {
        tokenize(sentence).into_iter().take(3).collect()
    }
}

impl Synthesizer for MockSynthesizer {
    fn observations(&self, entity_name: &str, facts: &[String]) -> ProviderResult<Vec<String>> {
        self.faults.check("synthesizer")?;
        Ok(facts
            .iter()
            .take(self.max_observations)
            .map(|f| format!("{entity_name}: {f}"))
            .collect())
    }

    fn merge_background(&self, current: &str, snippet: &str) -> ProviderResult<String> {
        self.faults.check("synthesizer")?;
        let mut merged = sentences(current);
        for new in sentences(snippet) {
            let key = Self::conflict_key(&new);
            match merged.iter().position(|old| Self::conflict_key(old) == key) {
                Some(i) => merged[i] = new,
                None => merged.push(new),
            }
        }
        Ok(truncate_chars(&merged.join(" "), self.background_max_len))
    }

    fn reflect(&self, request: &ReflectRequest) -> ProviderResult<ReflectOutput> {
        self.faults.check("synthesizer")?;
        if request.memories.is_empty() {
            return Ok(ReflectOutput {
                response: "I don't have enough information to answer that.".into(),
                opinions: Vec::new(),
            });
        }
        let cited: Vec<&str> = request.memories.iter().take(3).map(String::as_str).collect();
        Ok(ReflectOutput {
            response: format!("Based on what I remember: {}", cited.join(" ")),
            opinions: self.opinions.clone(),
        })
    }

    fn revise_opinion(&self, opinion: &str, fact: &str) -> ProviderResult<String> {
        self.faults.check("synthesizer")?;
        Ok(format!(
            "I now hold a more qualified view. Previously: {opinion} New evidence: {fact}"
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::cosine;
    use crate::time::parse_timestamp;
    use std::collections::BTreeMap;

    fn feature_cosine(a: &str, b: &str) -> f64 {
        let count = |s: &str| {
            let mut m: BTreeMap<String, f64> = BTreeMap::new();
            for f in MockEmbedder::features(s) {
                *m.entry(f).or_default() += 1.0;
            }
            m
        };
        let (fa, fb) = (count(a), count(b));
        let dot: f64 = fa.iter().map(|(k, v)| v * fb.get(k).unwrap_or(&0.0)).sum();
        let na = fa.values().map(|v| v * v).sum::<f64>().sqrt();
        let nb = fb.values().map(|v| v * v).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn embedding_is_deterministic_and_unit_norm() {
        let e = MockEmbedder::new(256);
        let a = e.embed("Alice went to Oslo").unwrap();
        assert_eq!(a, e.embed("Alice went to Oslo").unwrap());
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-12);
        assert!(e.embed("   ").is_err());
        let p = e.embed("!!!").unwrap();
        assert!((p.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn overlap_orders_similarity() {
        // Features of "alpha beta": 2 words + 5 + 4 trigrams = 11; adding
        // "gamma" brings 6 more, all 11 shared: cos = sqrt(11/17).
        let oracle_close = feature_cosine("alpha beta", "alpha beta gamma");
        assert!((oracle_close - (11.0f64 / 17.0).sqrt()).abs() < 1e-12);
        assert_eq!(feature_cosine("alpha beta", "unrelated zzz"), 0.0);

        let e = MockEmbedder::new(256);
        let ab = e.embed("alpha beta").unwrap();
        let close = cosine(&ab, &e.embed("alpha beta gamma").unwrap());
        let far = cosine(&ab, &e.embed("unrelated zzz").unwrap());
        assert!(close > far);
        // Bucket collisions perturb the collision-free value only slightly.
        assert!((close - oracle_close).abs() < 0.15, "{close} vs {oracle_close}");
        assert!(far.abs() < 0.3);
    }

    fn turns(n: usize, text: impl Fn(usize) -> String) -> Vec<Turn> {
        let t0 = parse_timestamp("2024-06-01T10:00:00Z").unwrap();
        (0..n)
            .map(|i| Turn {
                speaker: if i % 2 == 0 { "user" } else { "assistant" }.into(),
                text: text(i),
                timestamp: t0 + chrono::Duration::minutes(i as i64),
            })
            .collect()
    }

    #[test]
    fn ten_turns_give_two_to_five_facts() {
        let x = MockExtractor::default();
        for n in 2..=30 {
            let facts = x.extract(&turns(n, |i| format!("turn number {i}"))).unwrap();
            assert!((2..=5).contains(&facts.len()), "{n} turns → {}", facts.len());
        }
        assert_eq!(x.extract(&turns(10, |i| format!("t{i}"))).unwrap().len(), 5);
        assert!(x.extract(&[]).is_err());
    }

    #[test]
    fn lowercase_transcript_has_no_entities() {
        let facts = MockExtractor::default()
            .extract(&turns(4, |_| "we went hiking by the lake".into()))
            .unwrap();
        assert!(facts.iter().all(|f| f.entities.is_empty()));
    }

    #[test]
    fn repeated_name_is_one_mention() {
        let facts = MockExtractor::default()
            .extract(&turns(1, |_| {
                "Alice met Bob. Later Alice called Acme Labs.".into()
            }))
            .unwrap();
        let names: Vec<&str> = facts[0].entities.iter().map(|m| m.text.as_str()).collect();
        assert_eq!(names, vec!["Alice", "Bob", "Later Alice", "Acme Labs"]);
        assert_eq!(facts[0].entities[3].kind, EntityKind::Organization);
    }

    #[test]
    fn temporal_fields_follow_turns() {
        let ts = turns(4, |i| format!("t{i}"));
        let facts = MockExtractor::default().extract(&ts).unwrap();
        assert_eq!(facts[0].occurred_start, Some(ts[0].timestamp));
        assert_eq!(facts[0].occurred_end, Some(ts[1].timestamp));
        assert_eq!(facts[1].mentioned_at, Some(ts[3].timestamp));
        assert_eq!(facts[0].when, "Saturday, June 1, 2024");
    }

    #[test]
    fn assessor_rules() {
        let a = MockAssessor::default();
        assert_eq!(
            a.assess("X is good", "supports: X shipped on time").unwrap(),
            AssessLabel::Reinforce
        );
        assert_eq!(
            a.assess("X is good", "refutes: X failed audit").unwrap(),
            AssessLabel::Contradict
        );
        assert_eq!(
            a.assess("X is good", "doubts: X may slip").unwrap(),
            AssessLabel::Weaken
        );
        assert_eq!(
            a.assess("X is good", "weather is mild").unwrap(),
            AssessLabel::Neutral
        );
    }

    #[test]
    fn reranker_overlap() {
        assert_eq!(MockReranker::overlap("alice tea", "Alice drinks tea daily"), 1.0);
        assert_eq!(MockReranker::overlap("alice tea", "Bob"), 0.0);
        assert_eq!(MockReranker::overlap("alice tea", "tea"), 0.5);
    }

    #[test]
    fn background_merge_rules() {
        let s = MockSynthesizer::default();
        assert_eq!(
            s.merge_background(
                "I was born in Colorado.",
                "I was born in Texas and have 10 years of startup experience."
            )
            .unwrap(),
            "I was born in Texas and have 10 years of startup experience."
        );
        assert_eq!(
            s.merge_background("", "I am a pianist.").unwrap(),
            "I am a pianist."
        );
        let short = MockSynthesizer::default().with_limits(7, 30);
        let merged = short
            .merge_background("I like tea.", "I live in Oslo. I own a cat.")
            .unwrap();
        assert_eq!(merged, "I like tea. I live in Oslo.");
        assert!(merged.chars().count() <= 30);
    }

    #[test]
    fn observation_cap() {
        let s = MockSynthesizer::default();
        let facts: Vec<String> = (0..10).map(|i| format!("fact {i}")).collect();
        assert_eq!(s.observations("Alice", &facts).unwrap().len(), 7);
        assert_eq!(s.observations("Alice", &facts[..2]).unwrap().len(), 2);
    }

    #[test]
    fn fault_plan_schedule() {
        let f = FaultPlan::fail_calls([1]);
        assert!(f.check("p").is_ok());
        assert!(f.check("p").is_err());
        assert!(f.check("p").is_ok());
        let g = FaultPlan::fail_from(2);
        assert!(g.check("p").is_ok() && g.check("p").is_ok() && g.check("p").is_err());
    }
}
