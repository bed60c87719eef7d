use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use stimgen::sense::{
    fit_polysemy_classifier, generate_glosses, load_lexicon, polysemy_features, select_prompt,
    CvConfig, PromptCandidate, SenseInventory, TextCompleter, DEFAULT_BOOTSTRAP,
    FINAL_POLYSEMY_PROMPT, GLOSS_TEMPERATURES,
};

use crate::config::override_fields;
use crate::error::{CliError, Result};
use crate::io::{
    create_dir, load_config, load_model, read_json, read_lines, read_text, to_json_pretty,
    to_jsonl, write_text, Manifest,
};

#[derive(Debug, Args)]
pub struct SensesArgs {
    /// Reference lexicon: {"verb": [{"sense_id", "gloss"}, ...], ...}
    #[arg(long)]
    lexicon: PathBuf,
    /// Model scored for yes/no answers to the polysemy prompts
    #[arg(long)]
    model: PathBuf,
    /// Output directory
    #[arg(long)]
    out_dir: PathBuf,
    /// Verbs to build inventories for, one per line [default: the lexicon's verbs]
    #[arg(long)]
    verbs: Option<PathBuf>,
    /// Prompt candidates with per-verb sense counts (JSON array)
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Recorded completions: {"<rendered prompt>": "<completion>"}
    #[arg(long)]
    completions: Option<PathBuf>,
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bootstrap resamples for prompt selection [default: 1000]
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Seed for folds and bootstrap [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SensesConfig {
    bootstrap: usize,
    seed: u64,
    outer_folds: usize,
    inner_folds: usize,
}

impl Default for SensesConfig {
    fn default() -> Self {
        let cv = CvConfig::default();
        SensesConfig {
            bootstrap: DEFAULT_BOOTSTRAP,
            seed: 0,
            outer_folds: cv.outer_folds,
            inner_folds: cv.inner_folds,
        }
    }
}

/// Completions recorded ahead of time, looked up by rendered prompt.
struct RecordedCompleter(BTreeMap<String, String>);

impl TextCompleter for RecordedCompleter {
    fn complete(&self, prompt: &str, _temperature: f64) -> std::result::Result<String, String> {
        self.0
            .get(prompt)
            .cloned()
            .ok_or_else(|| format!("no recorded completion for {prompt:?}"))
    }
}

#[derive(Debug, Serialize)]
struct Monosemy {
    verb: String,
    monosemous: bool,
    source: &'static str,
}

pub fn run(args: SensesArgs) -> Result<()> {
    let mut cfg: SensesConfig = load_config(args.config.as_deref())?;
    override_fields!(cfg, args, bootstrap, seed);
    let lexicon = load_lexicon(&read_text(&args.lexicon)?)
        .map_err(|e| CliError::invalid(&args.lexicon, e))?;
    let lm = load_model(&args.model)?;
    let targets = match &args.verbs {
        Some(p) => read_lines(p)?,
        None => lexicon.keys().cloned().collect(),
    };

    create_dir(&args.out_dir)?;
    let mut m = Manifest::new("senses", &cfg, Some(cfg.seed));
    m.input("lexicon", &args.lexicon)?;
    m.input("model", &args.model)?;

    let features: Vec<_> = lexicon.keys().map(|v| polysemy_features(&lm, v)).collect();
    let features_path = args.out_dir.join("features.jsonl");
    write_text(&features_path, &to_jsonl(&features))?;
    m.output(&features_path);
    for f in features.iter().filter(|f| !f.degenerate.is_empty()) {
        m.note(format!(
            "{}: no yes/no mass for prompts {:?}",
            f.verb, f.degenerate
        ));
    }

    let labels: BTreeMap<String, bool> = lexicon
        .iter()
        .map(|(v, inv)| (v.clone(), inv.is_monosemous()))
        .collect();
    let cv = CvConfig {
        outer_folds: cfg.outer_folds,
        inner_folds: cfg.inner_folds,
        seed: cfg.seed,
        ..CvConfig::default()
    };
    let classifier = match fit_polysemy_classifier(&features, &labels, &cv) {
        Ok((svm, report)) => {
            let path = args.out_dir.join("cv_report.json");
            write_text(&path, &to_json_pretty(&report))?;
            m.output(&path);
            Some(svm)
        }
        Err(e) => {
            m.note(format!("classifier not trained: {e}"));
            None
        }
    };

    let monosemy: Vec<Monosemy> = targets
        .iter()
        .map(|v| match (lexicon.get(v), &classifier) {
            (Some(inv), _) => Monosemy {
                verb: v.clone(),
                monosemous: inv.is_monosemous(),
                source: "lexicon",
            },
            (None, Some(svm)) => Monosemy {
                verb: v.clone(),
                monosemous: svm.predict(&polysemy_features(&lm, v).log_odds),
                source: "classifier",
            },
            (None, None) => Monosemy {
                verb: v.clone(),
                monosemous: false,
                source: "default",
            },
        })
        .collect();
    let mono_path = args.out_dir.join("monosemy.jsonl");
    write_text(&mono_path, &to_jsonl(&monosemy))?;
    m.output(&mono_path);

    let mut prompt = PromptCandidate::new(0, FINAL_POLYSEMY_PROMPT, GLOSS_TEMPERATURES[0]);
    if let Some(path) = &args.candidates {
        m.input("candidates", path)?;
        let candidates: Vec<PromptCandidate> = read_json(path)?;
        let reference: BTreeMap<String, u32> = lexicon
            .iter()
            .map(|(v, inv)| (v.clone(), inv.senses.len() as u32))
            .collect();
        let selection = select_prompt(&candidates, &reference, cfg.bootstrap, cfg.seed)
            .map_err(|e| CliError::invalid(path, e))?;
        prompt = selection.chosen.clone();
        let out = args.out_dir.join("prompt_selection.json");
        write_text(&out, &to_json_pretty(&selection))?;
        m.output(&out);
    }

    if let Some(path) = &args.completions {
        m.input("completions", path)?;
        let completer = RecordedCompleter(read_json(path)?);
        let mut inventories: Vec<SenseInventory> = Vec::new();
        for t in &monosemy {
            match generate_glosses(&completer, &t.verb, t.monosemous, &prompt) {
                Ok(inv) => inventories.push(inv),
                Err(e) => m.note(format!("{}: {e}", t.verb)),
            }
        }
        let out = args.out_dir.join("inventories.json");
        write_text(&out, &to_json_pretty(&inventories))?;
        m.output(&out);
    }
    m.write_in(&args.out_dir)?;
    Ok(())
}
