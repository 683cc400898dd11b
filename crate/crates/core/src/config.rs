use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EdgeKind;

pub const DAY_SECS: f64 = 86_400.0;

/// Per-link-type multipliers applied during spreading activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMultipliers {
    pub temporal: f64,
    pub semantic: f64,
    pub entity: f64,
    pub causal: f64,
}

impl LinkMultipliers {
    pub fn get(&self, kind: EdgeKind) -> f64 {
        match kind {
            EdgeKind::Temporal => self.temporal,
            EdgeKind::Semantic => self.semantic,
            EdgeKind::Entity => self.entity,
            EdgeKind::Causal => self.causal,
        }
    }
}

impl Default for LinkMultipliers {
    fn default() -> Self {
        Self {
            temporal: 1.0,
            semantic: 0.9,
            entity: 1.3,
            causal: 1.5,
        }
    }
}

/// Weights of the string / co-occurrence / temporal terms in entity resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityWeights {
    pub string: f64,
    pub co_occurrence: f64,
    pub temporal: f64,
}

impl Default for EntityWeights {
    fn default() -> Self {
        Self {
            string: 0.6,
            co_occurrence: 0.25,
            temporal: 0.15,
        }
    }
}

/// Every engine tunable. Loaded from TOML; unspecified keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub embedding_dim: usize,
    /// Temporal decay scale in seconds.
    pub sigma_t: f64,
    pub theta_s: f64,
    pub activation_decay: f64,
    pub link_multipliers: LinkMultipliers,
    pub rrf_k: u32,
    pub opinion_alpha: f64,
    pub opinion_theta: f64,
    pub entity_weights: EntityWeights,
    pub channel_pool_size: usize,
    pub max_hops: usize,
    pub background_max_len: usize,

    /// Minimum weighted score for a mention to join an existing entity.
    pub entity_match_threshold: f64,
    /// Temporal links are only built within this many multiples of `sigma_t`.
    pub temporal_window_sigmas: f64,
    /// Whether opinion units take part in temporal linking.
    pub temporal_links_include_opinions: bool,
    pub graph_entry_points: usize,
    pub rerank_window: usize,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub bm25_stopwords: bool,
    pub default_opinion_confidence: f64,
    pub reflect_budget_tokens: usize,
    pub provider_retries: u32,
    /// Per-call provider timeout; `None` disables the watchdog.
    pub provider_timeout_ms: Option<u64>,
    /// Run observation refresh on the background worker (otherwise inline).
    pub background_observations: bool,
    pub observation_refresh_retries: u32,
    pub max_observations_per_entity: usize,
    /// Accepted for forward compatibility; recall does not enforce it.
    pub latency_budget_ms: Option<u64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 256,
            sigma_t: 7.0 * DAY_SECS,
            theta_s: 0.80,
            activation_decay: 0.7,
            link_multipliers: LinkMultipliers::default(),
            rrf_k: 60,
            opinion_alpha: 0.1,
            opinion_theta: 0.75,
            entity_weights: EntityWeights::default(),
            channel_pool_size: 50,
            max_hops: 2,
            background_max_len: 500,
            entity_match_threshold: 0.55,
            temporal_window_sigmas: 3.0,
            temporal_links_include_opinions: false,
            graph_entry_points: 10,
            rerank_window: 50,
            bm25_k1: 1.2,
            bm25_b: 0.75,
            bm25_stopwords: false,
            default_opinion_confidence: 0.6,
            reflect_budget_tokens: 4096,
            provider_retries: 2,
            provider_timeout_ms: Some(30_000),
            background_observations: true,
            observation_refresh_retries: 3,
            max_observations_per_entity: 7,
            latency_budget_ms: None,
        }
    }
}

impl EngineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: EngineConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let raw =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&raw)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut open_unit = |name: &str, x: f64| {
            if !(x > 0.0 && x < 1.0) {
                v.push(format!("{name} must lie in (0,1), got {x}"));
            }
        };
        open_unit("theta_s", self.theta_s);
        open_unit("activation_decay", self.activation_decay);
        open_unit("opinion_alpha", self.opinion_alpha);
        open_unit("opinion_theta", self.opinion_theta);

        if self.embedding_dim == 0 {
            v.push("embedding_dim must be positive".into());
        }
        if !(self.sigma_t > 0.0 && self.sigma_t.is_finite()) {
            v.push(format!("sigma_t must be positive, got {}", self.sigma_t));
        }
        for kind in EdgeKind::ALL {
            let mu = self.link_multipliers.get(kind);
            if !(mu > 0.0 && mu.is_finite()) {
                v.push(format!("link multiplier for {} must be > 0", kind.as_str()));
            }
        }
        if self.rrf_k < 1 {
            v.push("rrf_k must be >= 1".into());
        }
        let w = self.entity_weights;
        if w.string < 0.0 || w.co_occurrence < 0.0 || w.temporal < 0.0 {
            v.push("entity weights must be non-negative".into());
        }
        if ((w.string + w.co_occurrence + w.temporal) - 1.0).abs() > 1e-9 {
            v.push("entity weights must sum to 1".into());
        }
        if self.channel_pool_size == 0 {
            v.push("channel_pool_size must be positive".into());
        }
        if self.max_hops == 0 {
            v.push("max_hops must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.entity_match_threshold) {
            v.push("entity_match_threshold must lie in [0,1]".into());
        }
        if !(0.0..=1.0).contains(&self.default_opinion_confidence) {
            v.push("default_opinion_confidence must lie in [0,1]".into());
        }
        if self.temporal_window_sigmas <= 0.0 {
            v.push("temporal_window_sigmas must be positive".into());
        }
        if self.bm25_k1 < 0.0 || !(0.0..=1.0).contains(&self.bm25_b) {
            v.push("bm25 parameters out of range".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = EngineConfig::default();
        assert!(cfg.violations().is_empty(), "{:?}", cfg.violations());
        assert_eq!(cfg.rrf_k, 60);
        assert_eq!(cfg.sigma_t, 604_800.0);
        assert!(cfg.link_multipliers.causal > 1.0 && cfg.link_multipliers.entity > 1.0);
    }

    #[test]
    fn toml_overrides_and_rejects() {
        let cfg = EngineConfig::from_toml_str("rrf_k = 10\nmax_hops = 3\n").unwrap();
        assert_eq!(cfg.rrf_k, 10);
        assert_eq!(cfg.max_hops, 3);
        assert!(EngineConfig::from_toml_str("theta_s = 1.5").is_err());
        assert!(EngineConfig::from_toml_str("nonsense = 1").is_err());
        let bad = "[entity_weights]\nstring = 0.5\nco_occurrence = 0.5\ntemporal = 0.5\n";
        assert!(EngineConfig::from_toml_str(bad).is_err());
    }
}
