//! Text utilities: tokenization, name similarity and person normalization.

use std::sync::LazyLock;

use regex::Regex;

/// Case-folded alphanumeric tokens; everything else is a separator.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "did", "do", "for", "from", "had", "has", "have",
    "he", "her", "his", "i", "in", "is", "it", "its", "me", "my", "of", "on", "or", "she", "so", "that",
    "the", "their", "them", "they", "this", "to", "was", "we", "were", "what", "when", "where", "which",
    "who", "why", "with", "you", "your",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// `1 - levenshtein(a, b) / max(|a|, |b|)` over case-folded strings.
pub fn string_similarity(a: &str, b: &str) -> f64 {
    let a = a.to_lowercase();
    let b = b.to_lowercase();
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(&a, &b) as f64 / longest as f64
}

static SECOND_PERSON_START: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"(?i)(^\s*["'(\[]*|[.!?]["')\]]*\s+["'(\[]*)(you are|you were|you're|you've|you'll|you'd|your|you)\b"#,
    )
    .expect("static regex")
});

fn rewrite(subject: &str) -> &'static str {
    match subject.to_lowercase().as_str() {
        "you are" => "I am",
        "you were" => "I was",
        "you're" => "I'm",
        "you've" => "I've",
        "you'll" => "I'll",
        "you'd" => "I'd",
        "your" => "My",
        _ => "I",
    }
}

/// Rewrites sentence-initial second-person subjects into first person
/// ("You are" → "I am", "Your" → "My", ...). Idempotent.
pub fn normalize_first_person(text: &str) -> String {
    SECOND_PERSON_START
        .replace_all(text, |caps: &regex::Captures<'_>| {
            format!("{}{}", &caps[1], rewrite(&caps[2]))
        })
        .into_owned()
}

/// True when some sentence starts with a second-person subject.
pub fn has_second_person_subject(text: &str) -> bool {
    SECOND_PERSON_START.is_match(text)
}

/// Opinion statements must speak as the agent: at least one first-person
/// token and no second-person sentence subject.
pub fn is_first_person(text: &str) -> bool {
    let has_self = tokenize(text)
        .iter()
        .any(|t| matches!(t.as_str(), "i" | "my" | "me" | "mine" | "myself"));
    has_self && !has_second_person_subject(text)
}

/// Truncates to at most `max_chars` characters, preferring a sentence or
/// word boundary when one exists in the kept prefix.
pub fn truncate_chars(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let prefix: String = text.chars().take(max_chars).collect();
    if let Some(pos) = prefix.rfind(['.', '!', '?']) {
        return prefix[..=pos].to_string();
    }
    match prefix.rfind(char::is_whitespace) {
        Some(pos) if pos > 0 => prefix[..pos].trim_end().to_string(),
        _ => prefix,
    }
}

/// Splits into sentences, keeping terminal punctuation.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        cur.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            let s = cur.trim().to_string();
            if !s.is_empty() {
                out.push(s);
            }
            cur.clear();
        }
    }
    let s = cur.trim().to_string();
    if !s.is_empty() {
        out.push(s);
    }
    out
}
