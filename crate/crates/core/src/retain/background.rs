use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::providers::ProviderSuite;
use crate::text::{has_second_person_subject, normalize_first_person};

/// Merges a biographical snippet into the current background.
///
/// The snippet is rewritten into first person before the provider sees it,
/// and the provider's answer is accepted only if it stays within
/// `background_max_len` characters and has no second-person sentence subject.
pub fn merge_background(
    current: &str,
    snippet: &str,
    providers: &ProviderSuite,
    config: &EngineConfig,
) -> Result<String> {
    let snippet = normalize_first_person(snippet.trim());
    if snippet.is_empty() {
        return Ok(current.to_string());
    }
    let merged = providers.merge_background(current, &snippet)?;
    let merged = merged.trim().to_string();
    let len = merged.chars().count();
    if len > config.background_max_len {
        return Err(Error::BackgroundRejected(format!(
            "merged background has {len} characters, limit is {}",
            config.background_max_len
        )));
    }
    if has_second_person_subject(&merged) {
        return Err(Error::BackgroundRejected(
            "merged background is not written in first person".into(),
        ));
    }
    Ok(merged)
}
