use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::LmError;
use crate::dist::{Next, TokenDist};

/// How many trailing tokens of prompt plus output count as history for the
/// repeat penalty.
pub const REPEAT_WINDOW: usize = 64;

/// Sampler settings. Defaults reproduce the generation runs described for
/// the stimulus set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Keep the k most probable outcomes; 0 disables the filter.
    pub top_k: usize,
    pub top_p: f64,
    pub min_p: f64,
    pub temperature: f64,
    pub repeat_penalty: f64,
    pub max_tokens: usize,
    pub seed: u64,
    /// Accepted and recorded, never applied.
    pub typical_p: f64,
    /// Accepted and recorded, never applied.
    pub tfs_z: f64,
    /// Accepted and recorded, never applied.
    pub mirostat_tau: f64,
    /// Accepted and recorded, never applied.
    pub mirostat_eta: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            top_k: 40,
            top_p: 0.95,
            min_p: 0.05,
            temperature: 0.8,
            repeat_penalty: 1.1,
            max_tokens: 32,
            seed: 0,
            typical_p: 1.0,
            tfs_z: 1.0,
            mirostat_tau: 5.0,
            mirostat_eta: 0.1,
        }
    }
}

impl SamplerConfig {
    /// A configuration under which the chain is the identity.
    pub fn neutral() -> Self {
        SamplerConfig {
            top_k: 0,
            top_p: 1.0,
            min_p: 0.0,
            temperature: 1.0,
            repeat_penalty: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LmError> {
        let bad = |m: &str| Err(LmError::InvalidConfig(m.to_string()));
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.min_p) {
            return bad("min_p must lie in [0, 1)");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.repeat_penalty >= 1.0 && self.repeat_penalty.is_finite()) {
            return bad("repeat_penalty must be at least 1");
        }
        Ok(())
    }
}

/// Applies repeat penalty, top-k, top-p, min-p, and temperature in that
/// order, renormalizing after each step that changes the distribution.
/// End-of-sequence is treated like any token. The most probable outcome
/// always survives.
pub fn apply_sampler_chain(d: &TokenDist, cfg: &SamplerConfig, history: &[String]) -> TokenDist {
    // descending probability, ties by outcome order
    let mut items: Vec<(Next, f64)> = d.outcomes().collect();
    if items.is_empty() {
        return d.clone();
    }
    let sort = |items: &mut Vec<(Next, f64)>| {
        items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    };
    let normalize = |items: &mut Vec<(Next, f64)>| {
        let total: f64 = items.iter().map(|(_, p)| p).sum();
        for (_, p) in items.iter_mut() {
            *p /= total;
        }
    };

    if cfg.repeat_penalty != 1.0 {
        let seen: HashSet<&str> = history.iter().map(String::as_str).collect();
        let mut changed = false;
        for (o, p) in items.iter_mut() {
            if o.token().is_some_and(|t| seen.contains(t)) && *p < 1.0 {
                *p = (p.ln() * cfg.repeat_penalty).exp();
                changed = true;
            }
        }
        if changed {
            normalize(&mut items);
        }
    }
    sort(&mut items);

    if cfg.top_k > 0 && cfg.top_k < items.len() {
        items.truncate(cfg.top_k);
        normalize(&mut items);
    }

    if cfg.top_p < 1.0 {
        let mut acc = 0.0;
        let mut keep = items.len();
        for (i, (_, p)) in items.iter().enumerate() {
            acc += p;
            if acc >= cfg.top_p {
                keep = i + 1;
                break;
            }
        }
        if keep < items.len() {
            items.truncate(keep);
            normalize(&mut items);
        }
    }

    if cfg.min_p > 0.0 {
        let threshold = cfg.min_p * items[0].1;
        let before = items.len();
        items.retain(|(_, p)| *p >= threshold);
        if items.len() < before {
            normalize(&mut items);
        }
    }

    if cfg.temperature != 1.0 {
        let ln_max = items[0].1.ln();
        for (_, p) in items.iter_mut() {
            *p = ((p.ln() - ln_max) / cfg.temperature).exp();
        }
        normalize(&mut items);
    }

    let mut eos = 0.0;
    let mut entries = Vec::with_capacity(items.len());
    for (o, p) in items {
        match o {
            Next::Token(t) => entries.push((t, p)),
            Next::Eos => eos = p,
        }
    }
    TokenDist::from_probs(entries, eos, d.domain_size())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(pairs: &[(&str, f64)]) -> TokenDist {
        TokenDist::from_probs(pairs.iter().map(|(t, p)| (t.to_string(), *p)), 0.0, 3)
    }

    #[test]
    fn defaults() {
        let c = SamplerConfig::default();
        assert_eq!(
            (
                c.top_k,
                c.top_p,
                c.min_p,
                c.temperature,
                c.repeat_penalty,
                c.max_tokens
            ),
            (40, 0.95, 0.05, 0.8, 1.1, 32)
        );
        assert!(c.validate().is_ok());
    }

    #[test]
    fn top_k_two() {
        let cfg = SamplerConfig {
            top_k: 2,
            ..SamplerConfig::neutral()
        };
        let out = apply_sampler_chain(&dist(&[("a", 0.5), ("b", 0.3), ("c", 0.2)]), &cfg, &[]);
        assert!((out.prob("a") - 0.625).abs() < 1e-12);
        assert!((out.prob("b") - 0.375).abs() < 1e-12);
        assert_eq!(out.prob("c"), 0.0);
    }

    #[test]
    fn neutral_is_identity() {
        let d = TokenDist::from_probs([("a".into(), 0.5), ("b".into(), 0.3)], 0.2, 3);
        assert_eq!(
            apply_sampler_chain(&d, &SamplerConfig::neutral(), &["a".into()]),
            d
        );
    }

    #[test]
    fn min_p_drops_tail() {
        let cfg = SamplerConfig {
            min_p: 0.05,
            ..SamplerConfig::neutral()
        };
        let out = apply_sampler_chain(&dist(&[("a", 0.9), ("b", 0.06), ("c", 0.04)]), &cfg, &[]);
        assert!((out.prob("a") - 0.9375).abs() < 1e-12);
        assert!((out.prob("b") - 0.0625).abs() < 1e-12);
        assert_eq!(out.prob("c"), 0.0);
    }

    #[test]
    fn top_p_smallest_prefix() {
        let cfg = SamplerConfig {
            top_p: 0.8,
            ..SamplerConfig::neutral()
        };
        let out = apply_sampler_chain(&dist(&[("a", 0.5), ("b", 0.3), ("c", 0.2)]), &cfg, &[]);
        assert_eq!(out.support_len(), 2);
    }

    #[test]
    fn repeat_penalty_demotes_history() {
        let cfg = SamplerConfig {
            repeat_penalty: 2.0,
            ..SamplerConfig::neutral()
        };
        let out = apply_sampler_chain(&dist(&[("a", 0.5), ("b", 0.5)]), &cfg, &["a".into()]);
        // 0.25 vs 0.5 before renormalization
        assert!((out.prob("a") - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn temperature_sharpens() {
        let cfg = SamplerConfig {
            temperature: 0.5,
            ..SamplerConfig::neutral()
        };
        let out = apply_sampler_chain(&dist(&[("a", 0.75), ("b", 0.25)]), &cfg, &[]);
        assert!((out.prob("a") - 0.9).abs() < 1e-12);
    }

    #[test]
    fn eos_is_ordinary() {
        let d = TokenDist::from_probs([("a".into(), 0.3)], 0.7, 1);
        let cfg = SamplerConfig {
            top_k: 1,
            ..SamplerConfig::neutral()
        };
        assert_eq!(
            apply_sampler_chain(&d, &cfg, &[]).point_mass(),
            Some(Next::Eos)
        );
    }

    #[test]
    fn rejects_bad_config() {
        for c in [
            SamplerConfig {
                top_p: 0.0,
                ..Default::default()
            },
            SamplerConfig {
                temperature: 0.0,
                ..Default::default()
            },
            SamplerConfig {
                repeat_penalty: 0.9,
                ..Default::default()
            },
            SamplerConfig {
                min_p: 1.0,
                ..Default::default()
            },
        ] {
            assert!(c.validate().is_err());
        }
    }
}
