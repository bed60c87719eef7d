use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use stimgen::canon::{
    canonicalize_all, read_jsonl, select_per_sense, underfilled, CanonSentence, FilterConfig,
    VerbFormLexicon, DEFAULT_STOPLIST,
};

use crate::config::override_fields;
use crate::error::{CliError, Result};
use crate::io::{load_config, load_model, read_lines, read_text, to_jsonl, write_text, Manifest};

#[derive(Debug, Args)]
pub struct CanonArgs {
    /// Dependency-annotated sentences, one JSON object per line
    #[arg(long)]
    annotations: PathBuf,
    /// Target verb lemmas, one per line; "lemma past" overrides the past form
    #[arg(long)]
    verbs: PathBuf,
    /// Model used to rank candidates by surprisal
    #[arg(long)]
    model: PathBuf,
    /// Where to write the selected sentences (JSON lines)
    #[arg(long)]
    out: PathBuf,
    /// Also write every canonicalized candidate here
    #[arg(long)]
    candidates_out: Option<PathBuf>,
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sentences kept per sense [default: 4]
    #[arg(long)]
    per_sense: Option<usize>,
    /// Warn about senses with fewer sentences than this [default: 4]
    #[arg(long)]
    min_per_sense: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CanonConfig {
    per_sense: usize,
    min_per_sense: usize,
    stoplist: BTreeSet<String>,
}

impl Default for CanonConfig {
    fn default() -> Self {
        CanonConfig {
            per_sense: 4,
            min_per_sense: 4,
            stoplist: DEFAULT_STOPLIST.iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn run(args: CanonArgs) -> Result<()> {
    let mut cfg: CanonConfig = load_config(args.config.as_deref())?;
    override_fields!(cfg, args, per_sense, min_per_sense);

    let mut lex = VerbFormLexicon::default();
    let mut targets = Vec::new();
    for line in read_lines(&args.verbs)? {
        let mut parts = line.split_whitespace();
        let lemma = parts.next().expect("non-empty line").to_lowercase();
        match (parts.next(), parts.next()) {
            (None, _) => {}
            (Some(past), None) => lex.insert(&lemma, past),
            _ => {
                return Err(CliError::invalid(
                    &args.verbs,
                    format!("expected `lemma [past]`, got `{line}`"),
                ))
            }
        }
        targets.push(lemma);
    }
    let filter = FilterConfig {
        stoplist: cfg.stoplist.clone(),
        ..FilterConfig::new(targets)
    };

    let (records, parse_errors) = read_jsonl(&read_text(&args.annotations)?);
    let lm = load_model(&args.model)?;
    let (candidates, record_errors) = canonicalize_all(&records, &filter, &lex);
    let selection = select_per_sense(&candidates, &lm, cfg.per_sense);
    let selected: Vec<CanonSentence> = selection.values().flatten().cloned().collect();
    write_text(&args.out, &to_jsonl(&selected))?;

    let mut m = Manifest::new("canon", &cfg, None);
    m.input("annotations", &args.annotations)?;
    m.input("verbs", &args.verbs)?;
    m.input("model", &args.model)?;
    for e in parse_errors.iter().chain(&record_errors) {
        m.note(format!("skipped: {e}"));
    }
    for sense in underfilled(&selection, cfg.min_per_sense) {
        m.note(format!(
            "sense {sense} has only {} sentences",
            selection[&sense].len()
        ));
    }
    if let Some(path) = &args.candidates_out {
        write_text(path, &to_jsonl(&candidates))?;
        m.output(path);
    }
    m.output(&args.out);
    m.write_beside(&args.out)?;
    log::info!(
        "{} records, {} candidates, {} selected across {} senses",
        records.len(),
        candidates.len(),
        selected.len(),
        selection.len()
    );
    Ok(())
}
