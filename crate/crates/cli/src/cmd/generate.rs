use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use stimgen::grammar::parse_grammar;
use stimgen::lm::SamplerConfig;
use stimgen::sampler::{generate_unique, GenRequest, DEFAULT_GRAMMAR, DEFAULT_PROMPT_TEMPLATE};

use crate::config::{override_fields, SamplerArgs};
use crate::error::{CliError, Result};
use crate::io::{load_config, load_model, read_jsonl, read_text, to_jsonl, write_text, Manifest};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// JSON lines, each with at least verb, verb_past and sense_gloss
    #[arg(long)]
    requests: PathBuf,
    /// Model JSON (n-gram dump or table)
    #[arg(long)]
    model: PathBuf,
    /// Where to write one result per request (JSON lines)
    #[arg(long)]
    out: PathBuf,
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grammar file used by requests that do not carry their own
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Prompt template with {{VERB}} and {{SENSE_GLOSS}} slots
    #[arg(long)]
    prompt_template: Option<String>,
    /// Unique sentences to collect per request [default: 10]
    #[arg(long)]
    n_unique: Option<usize>,
    /// Lowest-surprisal sentences to keep [default: 4]
    #[arg(long)]
    n_keep: Option<usize>,
    /// Seeds tried per temperature [default: 100]
    #[arg(long)]
    max_seeds: Option<usize>,
    /// Temperature steps [default: 100]
    #[arg(long)]
    max_temps: Option<usize>,
    /// Temperature increment per step [default: 0.1]
    #[arg(long)]
    temp_step: Option<f64>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenerateConfig {
    sampler: SamplerConfig,
    grammar: String,
    prompt_template: String,
    n_unique: usize,
    n_keep: usize,
    max_seeds: usize,
    max_temps: usize,
    temp_step: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        let r = GenRequest::new("", "", "");
        GenerateConfig {
            sampler: r.sampler,
            grammar: DEFAULT_GRAMMAR.to_string(),
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_string(),
            n_unique: r.n_unique,
            n_keep: r.n_keep,
            max_seeds: r.max_seeds,
            max_temps: r.max_temps,
            temp_step: r.temp_step,
        }
    }
}

impl GenerateConfig {
    /// Request fields not given on a line fall back to these values.
    fn request_defaults(&self) -> serde_json::Map<String, Value> {
        let v = serde_json::to_value(self).expect("serializable");
        v.as_object().cloned().expect("object")
    }
}

pub fn run(args: GenerateArgs) -> Result<()> {
    let mut cfg: GenerateConfig = load_config(args.config.as_deref())?;
    override_fields!(
        cfg,
        args,
        prompt_template,
        n_unique,
        n_keep,
        max_seeds,
        max_temps,
        temp_step
    );
    if let Some(path) = &args.grammar {
        cfg.grammar = read_text(path)?;
    }
    args.sampler.apply(&mut cfg.sampler);
    parse_grammar(&cfg.grammar).map_err(|e| CliError::Validation(format!("grammar: {e}")))?;

    let lines: Vec<Value> = read_jsonl(&args.requests)?;
    let defaults = cfg.request_defaults();
    let requests = lines
        .into_iter()
        .enumerate()
        .map(|(i, line)| {
            let Value::Object(fields) = line else {
                return Err(CliError::invalid(
                    &args.requests,
                    format!("request {} is not an object", i + 1),
                ));
            };
            let mut merged = defaults.clone();
            merged.extend(fields);
            let req: GenRequest = serde_json::from_value(Value::Object(merged)).map_err(|e| {
                CliError::invalid(&args.requests, format!("request {}: {e}", i + 1))
            })?;
            req.validate().map_err(|e| {
                CliError::invalid(&args.requests, format!("request {}: {e}", i + 1))
            })?;
            Ok(req)
        })
        .collect::<Result<Vec<_>>>()?;
    let lm = load_model(&args.model)?;

    // requests are independent and pure, so the ordered collect is
    // schedule-independent
    let results = requests
        .par_iter()
        .enumerate()
        .map(|(i, req)| {
            generate_unique(req, &lm)
                .map_err(|e| CliError::Validation(format!("request {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;

    write_text(&args.out, &to_jsonl(&results))?;
    let mut m = Manifest::new("generate", &cfg, Some(cfg.sampler.seed));
    m.input("requests", &args.requests)?;
    m.input("model", &args.model)?;
    if let Some(g) = &args.grammar {
        m.input("grammar", g)?;
    }
    for (i, r) in results.iter().enumerate() {
        if r.exhausted {
            m.note(format!(
                "request {} ({} / {}): only {} unique sentences after {} attempts",
                i + 1,
                r.verb,
                r.sense_gloss,
                r.unique_found,
                r.attempts
            ));
        }
        if r.dead_ends > 0 {
            m.note(format!("request {}: {} dead ends", i + 1, r.dead_ends));
        }
    }
    m.output(&args.out);
    m.write_beside(&args.out)?;
    Ok(())
}
