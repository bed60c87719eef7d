//! Sense inventories: monosemy/polysemy features, gloss elicitation, and
//! prompt selection.
//!
//! Stage one scores each verb with the yes/no log-odds a model assigns to
//! eight phrasings of "does this verb have one sense?" and fits a support
//! vector classifier to a reference lexicon. Stage two asks a text
//! completer for one gloss or an enumerated list, and picks the elicitation
//! prompt whose sense counts best match the reference.

mod svm;

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{tokenize, LanguageModel};
use crate::rng::{substream, Stream};

pub use svm::{
    default_grid, grid_search, nested_cv, nested_cv_with, stratified_folds, CvConfig, CvReport,
    Kernel, Svm, SvmParams, C_GRID,
};

pub const VERB_SLOT: &str = "{{VERB}}";

pub const POLYSEMY_PROMPTS: [&str; 8] = [
    r#"Does the verb "{{VERB}}" have only one sense when used in a transitive clause?"#,
    r#"Does the verb "{{VERB}}" have only one possible meaning when used in a transitive clause?"#,
    r#"Does the verb "{{VERB}}" have only one sense when used in a transitive clause? Only answer with YES or NO."#,
    r#"Does the verb "{{VERB}}" have only one possible meaning when used in a transitive clause? Only answer with YES or NO."#,
    r#"Does the verb "{{VERB}}" have MORE THAN one distinct meaning when used in a transitive clause?"#,
    r#"Does the verb "{{VERB}}" have more than one distinct meaning when used in a transitive clause?"#,
    r#"When used in a transitive clause, does the verb "{{VERB}}" have ONE meaning, or MORE THAN ONE distinct meaning?"#,
    r#"When used in a transitive clause, does the verb "{{VERB}}" have one meaning, or more than one distinct meaning?"#,
];

pub const MONOSEMOUS_PROMPT: &str = r#"Please describe the one possible sense of the verb "{{VERB}}" when it is used in a transitive clause."#;

pub const BASE_PROMPT: &str = r#"Describe and enumerate the distinct possible senses of the verb "{{VERB}}" when it is found in a transitive clause."#;

pub const PROMPT_COMPONENTS: [&str; 4] = [
    r#"For example, if you were given the verb "administrate", you should respond with "manage" because "administrate" has one transitive sense."#,
    r#"For example, if you were given the verb "abandon", you should respond with "1. leave behind; 2. exchange; 3. surrender, give over" since "abandon" has three transitive senses."#,
    r#"For example, the verb "jump" has five senses because it has multiple possible meanings when it is used, so you should output something like "1. stock prices, increase, 2. be excited for an opportunity, getting there first, 3. physically or metaphorically leap, physical motion, 4. to escape, bail out, 5. attack, gangsta style"."#,
    "Ensure that the sense description(s) can stand alone and do not depend on being the synonym of some other verb.",
];

/// The elicitation prompt that was finally used for polysemous verbs.
pub const FINAL_POLYSEMY_PROMPT: &str = r#"Describe and enumerate the distinct possible senses of the verb "{{VERB}}" when it is found in a transitive clause. Feel free to give only one sense if it only has one possible meaning. For example, if you were given the verb "administrate", you should respond with "manage" because "administrate" has one transitive sense."#;

pub const GLOSS_TEMPERATURES: [f64; 3] = [0.7, 0.8, 0.9];

/// Probability floor applied to each side of a log-odds ratio.
pub const MASS_FLOOR: f64 = 1e-10;

pub const DEFAULT_BOOTSTRAP: usize = 1000;

#[derive(Debug, Error)]
pub enum SenseError {
    #[error("need at least {min} labeled verbs, got {got}")]
    TooFewExamples { min: usize, got: usize },
    #[error("labels contain a single class")]
    SingleClass,
    #[error("no verb labeled for `{0}`")]
    MissingLabel(String),
    #[error("no prompt candidates")]
    NoCandidates,
    #[error("candidate {id} has no count for verb `{verb}`")]
    MissingCount { id: u32, verb: String },
    #[error("reference counts are empty")]
    EmptyReference,
    #[error("could not parse any gloss for `{verb}` from completion {completion:?}")]
    Unparseable { verb: String, completion: String },
    #[error("text completion failed: {0}")]
    Completion(String),
    #[error("duplicate sense id `{0}`")]
    DuplicateSense(String),
    #[error("verb `{0}` has no senses")]
    NoSenses(String),
    #[error("malformed lexicon: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn render_verb(template: &str, verb: &str) -> String {
    template.replace(VERB_SLOT, verb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolysemyFeatures {
    pub verb: String,
    /// `ln p(yes) - ln p(no)` for each of the eight prompts.
    pub log_odds: Vec<f64>,
    /// Prompts where neither answer had any mass; their feature is 0.
    pub degenerate: Vec<usize>,
}

/// Yes/no log-odds of the first answer token after each polysemy prompt.
/// Every case variant of "yes" and "no" in the distribution is pooled.
pub fn polysemy_features<L: LanguageModel + ?Sized>(lm: &L, verb: &str) -> PolysemyFeatures {
    let mut log_odds = Vec::with_capacity(POLYSEMY_PROMPTS.len());
    let mut degenerate = Vec::new();
    for (i, template) in POLYSEMY_PROMPTS.iter().enumerate() {
        let prompt = tokenize(&render_verb(template, verb));
        let d = lm.next_token_dist(&prompt);
        let mass = |word: &str| -> f64 {
            d.entries()
                .iter()
                .filter(|(t, _)| t.to_lowercase() == word)
                .map(|(_, p)| p)
                .sum()
        };
        let (yes, no) = (mass("yes"), mass("no"));
        if yes == 0.0 && no == 0.0 {
            degenerate.push(i);
            log_odds.push(0.0);
        } else {
            log_odds.push(yes.max(MASS_FLOOR).ln() - no.max(MASS_FLOOR).ln());
        }
    }
    PolysemyFeatures {
        verb: verb.to_string(),
        log_odds,
        degenerate,
    }
}

/// Fits the monosemy classifier (`true` = monosemous) with nested
/// cross-validation and a refit on all verbs.
pub fn fit_polysemy_classifier(
    features: &[PolysemyFeatures],
    monosemous: &BTreeMap<String, bool>,
    cfg: &CvConfig,
) -> Result<(Svm, CvReport), SenseError> {
    const MIN_EXAMPLES: usize = 10;
    if features.len() < MIN_EXAMPLES {
        return Err(SenseError::TooFewExamples {
            min: MIN_EXAMPLES,
            got: features.len(),
        });
    }
    let mut x = Vec::with_capacity(features.len());
    let mut y = Vec::with_capacity(features.len());
    for f in features {
        let label = monosemous
            .get(&f.verb)
            .ok_or_else(|| SenseError::MissingLabel(f.verb.clone()))?;
        x.push(f.log_odds.clone());
        y.push(*label);
    }
    if y.iter().all(|&l| l == y[0]) {
        return Err(SenseError::SingleClass);
    }
    Ok(nested_cv(&x, &y, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SenseSource {
    ReferenceLexicon,
    LmGenerated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sense {
    pub sense_id: String,
    pub gloss: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenseInventory {
    pub verb: String,
    pub senses: Vec<Sense>,
    pub source: SenseSource,
}

impl SenseInventory {
    pub fn new(verb: &str, senses: Vec<Sense>, source: SenseSource) -> Result<Self, SenseError> {
        if senses.is_empty() {
            return Err(SenseError::NoSenses(verb.to_string()));
        }
        let mut seen = HashSet::new();
        for s in &senses {
            if !seen.insert(s.sense_id.as_str()) {
                return Err(SenseError::DuplicateSense(s.sense_id.clone()));
            }
        }
        Ok(SenseInventory {
            verb: verb.to_string(),
            senses,
            source,
        })
    }

    pub fn is_monosemous(&self) -> bool {
        self.senses.len() == 1
    }
}

/// Reads a reference lexicon: a JSON object mapping each verb to a list of
/// `{sense_id, gloss}` objects.
pub fn load_lexicon(text: &str) -> Result<BTreeMap<String, SenseInventory>, SenseError> {
    let raw: BTreeMap<String, Vec<Sense>> = serde_json::from_str(text)?;
    raw.into_iter()
        .map(|(verb, senses)| {
            let inv = SenseInventory::new(&verb, senses, SenseSource::ReferenceLexicon)?;
            Ok((verb, inv))
        })
        .collect()
}

fn trim_item(s: &str) -> String {
    s.trim()
        .trim_end_matches(|c: char| c.is_whitespace() || matches!(c, ';' | ',' | '.' | ':'))
        .trim()
        .trim_matches('"')
        .trim()
        .to_string()
}

/// Splits a numbered enumeration (`1. a; 2. b` or `1) a 2) b`, on one line
/// or several) into its items. Markers must count up from 1; text before
/// the first marker is dropped. Text without markers is one item.
pub fn parse_enumeration(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    // (marker start, item start)
    let mut marks: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let boundary = i == 0 || {
            let prev = bytes[i - 1];
            prev.is_ascii_whitespace() || matches!(prev, b';' | b',' | b'(' | b'"')
        };
        if boundary && bytes[i].is_ascii_digit() {
            let mut j = i;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            let closes = j < bytes.len() && matches!(bytes[j], b'.' | b')');
            let spaced = j + 1 >= bytes.len() || bytes[j + 1].is_ascii_whitespace();
            let expected = (marks.len() + 1).to_string();
            if closes && spaced && text[i..j] == expected {
                marks.push((i, j + 1));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    if marks.is_empty() {
        let item = trim_item(text);
        return if item.is_empty() {
            Vec::new()
        } else {
            vec![item]
        };
    }
    marks
        .iter()
        .enumerate()
        .map(|(k, &(_, start))| {
            let end = marks.get(k + 1).map_or(text.len(), |m| m.0);
            trim_item(&text[start..end])
        })
        .filter(|s| !s.is_empty())
        .collect()
}

/// Source of free-text completions, such as a chat model.
pub trait TextCompleter {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<String, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptCandidate {
    pub id: u32,
    pub text: String,
    pub temperature: f64,
    /// Sense count produced for each verb.
    #[serde(default)]
    pub counts: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    /// Bootstrap interval of `MAE(candidate) - MAE(best)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_high: Option<f64>,
}

impl PromptCandidate {
    pub fn new(id: u32, text: &str, temperature: f64) -> Self {
        PromptCandidate {
            id,
            text: text.to_string(),
            temperature,
            counts: BTreeMap::new(),
            mae: None,
            ci_low: None,
            ci_high: None,
        }
    }
}

/// The base prompt alone, then the base prompt followed by every non-empty
/// subset of the four components, smaller subsets first and components
/// always in their listed order. Sixteen texts.
pub fn prompt_combinations() -> Vec<String> {
    let n = PROMPT_COMPONENTS.len();
    let mut subsets: Vec<Vec<usize>> = (0u32..1 << n)
        .map(|mask| (0..n).filter(|&i| mask & (1 << i) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
        .into_iter()
        .map(|s| {
            std::iter::once(BASE_PROMPT)
                .chain(s.into_iter().map(|i| PROMPT_COMPONENTS[i]))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Every prompt combination at every gloss temperature, numbered from 0.
pub fn prompt_candidates() -> Vec<PromptCandidate> {
    let mut out = Vec::new();
    for text in prompt_combinations() {
        for t in GLOSS_TEMPERATURES {
            out.push(PromptCandidate::new(out.len() as u32, &text, t));
        }
    }
    out
}

/// Elicits glosses for `verb`. Monosemous verbs get the single-sense
/// prompt and the whole completion as their gloss; others get the
/// candidate's prompt and a parsed enumeration.
pub fn generate_glosses<C: TextCompleter + ?Sized>(
    completer: &C,
    verb: &str,
    is_monosemous: bool,
    prompt: &PromptCandidate,
) -> Result<SenseInventory, SenseError> {
    let template = if is_monosemous {
        MONOSEMOUS_PROMPT
    } else {
        prompt.text.as_str()
    };
    let completion = completer
        .complete(&render_verb(template, verb), prompt.temperature)
        .map_err(SenseError::Completion)?;
    let glosses = if is_monosemous {
        let g = trim_item(&completion);
        if g.is_empty() {
            Vec::new()
        } else {
            vec![g]
        }
    } else {
        parse_enumeration(&completion)
    };
    if glosses.is_empty() {
        return Err(SenseError::Unparseable {
            verb: verb.to_string(),
            completion,
        });
    }
    let senses = glosses
        .into_iter()
        .enumerate()
        .map(|(i, gloss)| Sense {
            sense_id: format!("{verb}.{:02}", i + 1),
            gloss,
        })
        .collect();
    SenseInventory::new(verb, senses, SenseSource::LmGenerated)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSelection {
    pub chosen: PromptCandidate,
    /// Ids whose interval against the best candidate contains 0.
    pub best_set: Vec<u32>,
    /// All candidates with their error and interval filled in.
    pub scored: Vec<PromptCandidate>,
}

fn mean_abs_error(
    counts: &BTreeMap<String, u32>,
    reference: &[(&String, u32)],
    sample: &[usize],
) -> f64 {
    let total: f64 = sample
        .iter()
        .map(|&i| {
            let (verb, r) = reference[i];
            (f64::from(counts[verb]) - f64::from(r)).abs()
        })
        .sum();
    total / sample.len() as f64
}

/// Linear-interpolated empirical quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Picks the elicitation prompt whose per-verb sense counts best match the
/// reference. Candidates whose 95% percentile-bootstrap interval for the
/// error difference to the best contains 0 are treated as tied, and the
/// tie goes to the shortest text, then the lowest temperature, then the
/// lowest id. A candidate that matches the reference exactly and alone is
/// returned directly.
pub fn select_prompt(
    candidates: &[PromptCandidate],
    reference: &BTreeMap<String, u32>,
    bootstrap: usize,
    seed: u64,
) -> Result<PromptSelection, SenseError> {
    if candidates.is_empty() {
        return Err(SenseError::NoCandidates);
    }
    if reference.is_empty() {
        return Err(SenseError::EmptyReference);
    }
    for c in candidates {
        if let Some(verb) = reference.keys().find(|v| !c.counts.contains_key(*v)) {
            return Err(SenseError::MissingCount {
                id: c.id,
                verb: verb.clone(),
            });
        }
    }
    let refs: Vec<(&String, u32)> = reference.iter().map(|(v, &n)| (v, n)).collect();
    let all: Vec<usize> = (0..refs.len()).collect();
    let maes: Vec<f64> = candidates
        .iter()
        .map(|c| mean_abs_error(&c.counts, &refs, &all))
        .collect();
    let best = (0..candidates.len())
        .min_by(|&a, &b| maes[a].total_cmp(&maes[b]))
        .expect("non-empty");

    let mut rng = substream(seed, Stream::Bootstrap);
    let mut diffs: Vec<Vec<f64>> = vec![Vec::with_capacity(bootstrap); candidates.len()];
    let mut sample = vec![0; refs.len()];
    for _ in 0..bootstrap {
        for s in sample.iter_mut() {
            *s = rng.gen_range(0..refs.len());
        }
        let best_mae = mean_abs_error(&candidates[best].counts, &refs, &sample);
        for (k, c) in candidates.iter().enumerate() {
            diffs[k].push(mean_abs_error(&c.counts, &refs, &sample) - best_mae);
        }
    }

    let mut scored = candidates.to_vec();
    let mut best_set = Vec::new();
    for (k, c) in scored.iter_mut().enumerate() {
        let mut d = std::mem::take(&mut diffs[k]);
        d.sort_by(f64::total_cmp);
        let (lo, hi) = if d.is_empty() {
            let x = maes[k] - maes[best];
            (x, x)
        } else {
            (quantile(&d, 0.025), quantile(&d, 0.975))
        };
        c.mae = Some(maes[k]);
        c.ci_low = Some(lo);
        c.ci_high = Some(hi);
        if lo <= 0.0 && 0.0 <= hi {
            best_set.push(k);
        }
    }

    let exact: Vec<usize> = (0..candidates.len()).filter(|&k| maes[k] == 0.0).collect();
    let chosen = if exact.len() == 1 {
        exact[0]
    } else {
        *best_set
            .iter()
            .min_by(|&&a, &&b| {
                let (ca, cb) = (&candidates[a], &candidates[b]);
                ca.text
                    .chars()
                    .count()
                    .cmp(&cb.text.chars().count())
                    .then(ca.temperature.total_cmp(&cb.temperature))
                    .then(ca.id.cmp(&cb.id))
            })
            .expect("the best candidate is always in its own interval")
    };
    Ok(PromptSelection {
        chosen: scored[chosen].clone(),
        best_set: best_set.iter().map(|&k| candidates[k].id).collect(),
        scored,
    })
}
