//! Flag overrides layered over JSON config files.

use clap::Args;
use stimgen::lm::SamplerConfig;

/// Sampler flags. Unset flags leave the config file (or built-in) value.
#[derive(Debug, Clone, Default, Args)]
pub struct SamplerArgs {
    /// Keep the k most likely tokens; 0 disables [default: 40]
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Nucleus mass [default: 0.95]
    #[arg(long)]
    pub top_p: Option<f64>,
    /// Drop tokens below this fraction of the top probability [default: 0.05]
    #[arg(long)]
    pub min_p: Option<f64>,
    /// Softmax temperature; 0 is greedy [default: 0.8]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Penalty for recently seen tokens [default: 1.1]
    #[arg(long)]
    pub repeat_penalty: Option<f64>,
    /// Maximum generated tokens [default: 32]
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// Global seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SamplerArgs {
    pub fn apply(&self, cfg: &mut SamplerConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(
            top_k,
            top_p,
            min_p,
            temperature,
            repeat_penalty,
            max_tokens,
            seed
        );
    }
}

/// Assigns `Some` flag values onto config fields.
macro_rules! override_fields {
    ($cfg:expr, $args:expr, $($f:ident),* $(,)?) => {
        $(if let Some(v) = $args.$f.clone() { $cfg.$f = v; })*
    };
}
pub(crate) use override_fields;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_only_when_set() {
        let mut cfg = SamplerConfig {
            top_k: 7,
            ..SamplerConfig::default()
        };
        SamplerArgs {
            temperature: Some(1.5),
            ..Default::default()
        }
        .apply(&mut cfg);
        assert_eq!(cfg.top_k, 7);
        assert_eq!(cfg.temperature, 1.5);
    }
}
