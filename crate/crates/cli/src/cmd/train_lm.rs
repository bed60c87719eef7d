use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use stimgen::lm::{tokenize, train_ngram};

use crate::config::override_fields;
use crate::error::{CliError, Result};
use crate::io::{load_config, read_lines, write_text, Manifest};

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    /// Training text, one sentence per line
    #[arg(long)]
    corpus: PathBuf,
    /// Where to write the model JSON
    #[arg(long)]
    out: PathBuf,
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// N-gram order [default: 3]
    #[arg(long)]
    order: Option<usize>,
    /// Add-k smoothing constant [default: 0.1]
    #[arg(long)]
    k: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainConfig {
    order: usize,
    k: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { order: 3, k: 0.1 }
    }
}

pub fn run(args: TrainLmArgs) -> Result<()> {
    let mut cfg: TrainConfig = load_config(args.config.as_deref())?;
    override_fields!(cfg, args, order, k);
    let sentences: Vec<Vec<String>> = read_lines(&args.corpus)?
        .iter()
        .map(|l| tokenize(l))
        .filter(|t| !t.is_empty())
        .collect();
    let model = train_ngram(&sentences, cfg.order, cfg.k)
        .map_err(|e| CliError::invalid(&args.corpus, e))?;
    write_text(&args.out, &model.to_json())?;
    let mut m = Manifest::new("train-lm", &cfg, None);
    m.input("corpus", &args.corpus)?;
    m.output(&args.out);
    m.write_beside(&args.out)?;
    log::info!(
        "trained order-{} model on {} sentences",
        cfg.order,
        sentences.len()
    );
    Ok(())
}
