use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use stimgen::grammar::parse_grammar;
use stimgen::lm::{tokenize, LanguageModel, SamplerConfig};
use stimgen::sampler::{divergence_report, DEFAULT_DIVERGENCE_CAP};
use stimgen::Parser;

use crate::config::SamplerArgs;
use crate::error::{CliError, Result};
use crate::io::{load_config, load_model, read_text, to_json_pretty, write_text, Manifest};

#[derive(Debug, Args)]
pub struct DivergenceArgs {
    /// Grammar file
    #[arg(long)]
    grammar: PathBuf,
    /// Model JSON
    #[arg(long)]
    model: PathBuf,
    /// Prompt text the model is conditioned on
    #[arg(long, default_value = "")]
    prompt: String,
    /// Where to write the report; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum enumeration nodes [default: 1000000]
    #[arg(long)]
    cap: Option<usize>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DivergenceConfig {
    sampler: SamplerConfig,
    cap: usize,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        DivergenceConfig {
            sampler: SamplerConfig::default(),
            cap: DEFAULT_DIVERGENCE_CAP,
        }
    }
}

pub fn run(args: DivergenceArgs) -> Result<()> {
    let mut cfg: DivergenceConfig = load_config(args.config.as_deref())?;
    args.sampler.apply(&mut cfg.sampler);
    if let Some(c) = args.cap {
        cfg.cap = c;
    }
    let lm = load_model(&args.model)?;
    let grammar = parse_grammar(&read_text(&args.grammar)?)
        .and_then(|g| g.desugar_wildcards(&lm.vocab().content_tokens()))
        .map_err(|e| CliError::invalid(&args.grammar, e))?;
    let parser = Parser::new(&grammar).map_err(|e| CliError::invalid(&args.grammar, e))?;
    let report = divergence_report(&lm, &parser, &tokenize(&args.prompt), &cfg.sampler, cfg.cap)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let text = to_json_pretty(&report);
    match &args.out {
        Some(out) => {
            write_text(out, &text)?;
            let mut m = Manifest::new("divergence", &cfg, Some(cfg.sampler.seed));
            m.input("grammar", &args.grammar)?;
            m.input("model", &args.model)?;
            m.output(out);
            m.write_beside(out)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}
