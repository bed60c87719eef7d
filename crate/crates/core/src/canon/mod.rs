//! Corpus canonicalization.
//!
//! Dependency-annotated corpus sentences are filtered to transitive clauses
//! of a target verb whose subject and object are nouns with a determiner,
//! then rewritten as `The <subject> <verb-past> the <object>.`. Everything
//! outside the subject-verb-object triple is dropped. Annotations are read
//! from JSONL; no parsing or sense tagging happens here.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{surprisal, tokenize, LanguageModel};

pub const SUBJECT_RELATIONS: [&str; 1] = ["nsubj"];
pub const OBJECT_RELATIONS: [&str; 2] = ["obj", "dobj"];
pub const DETERMINER_RELATIONS: [&str; 4] = ["det", "det:poss", "poss", "nmod:poss"];
pub const NOUN_TAGS: [&str; 2] = ["NOUN", "PROPN"];
pub const DEFAULT_STOPLIST: [&str; 5] = ["lot", "bit", "bunch", "ton", "deal"];

const IRREGULAR: &str = include_str!("irregular.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CanonError {
    #[error("record {source_id}: {reason}")]
    Malformed { source_id: String, reason: String },
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub upos: String,
    /// 0-based index of the head token; `None` for the root.
    pub head: Option<usize>,
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub source_id: String,
    pub sense_tag: String,
    pub verb_index: usize,
    pub tokens: Vec<Token>,
}

impl AnnotatedSentence {
    pub fn validate(&self) -> Result<(), CanonError> {
        let bad = |reason: String| CanonError::Malformed {
            source_id: self.source_id.clone(),
            reason,
        };
        if self.verb_index >= self.tokens.len() {
            return Err(bad(format!(
                "verb_index {} out of range for {} tokens",
                self.verb_index,
                self.tokens.len()
            )));
        }
        for (i, t) in self.tokens.iter().enumerate() {
            match t.head {
                Some(h) if h >= self.tokens.len() => {
                    return Err(bad(format!("token {i} has dangling head {h}")))
                }
                Some(h) if h == i => return Err(bad(format!("token {i} heads itself"))),
                _ => {}
            }
        }
        Ok(())
    }

    fn dependents(&self, head: usize) -> impl Iterator<Item = (usize, &Token)> {
        self.tokens
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.head == Some(head))
    }
}

/// Reads one annotated sentence per non-empty line. Bad lines are
/// returned as errors alongside the good records.
pub fn read_jsonl(text: &str) -> (Vec<AnnotatedSentence>, Vec<CanonError>) {
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<AnnotatedSentence>(line) {
            Ok(s) => ok.push(s),
            Err(e) => errors.push(CanonError::Json {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    (ok, errors)
}

/// Filter settings: target verb lemmas and bleached nouns to skip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub target_verbs: BTreeSet<String>,
    pub stoplist: BTreeSet<String>,
}

impl FilterConfig {
    pub fn new<I, S>(target_verbs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        FilterConfig {
            target_verbs: target_verbs.into_iter().map(Into::into).collect(),
            stoplist: DEFAULT_STOPLIST.iter().map(|s| s.to_string()).collect(),
        }
    }
}

fn is_word(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_')
}

/// Subject and object head nouns of a qualifying transitive clause, or
/// `None` when the sentence does not qualify.
pub fn filter_transitive(
    s: &AnnotatedSentence,
    cfg: &FilterConfig,
) -> Result<Option<(String, String)>, CanonError> {
    s.validate()?;
    let verb = &s.tokens[s.verb_index];
    if !cfg.target_verbs.contains(&verb.lemma.to_lowercase()) {
        return Ok(None);
    }
    let noun_with_det = |relations: &[&str]| -> Option<String> {
        let (idx, tok) = s
            .dependents(s.verb_index)
            .find(|(_, t)| relations.contains(&t.deprel.as_str()))?;
        let qualifies = NOUN_TAGS.contains(&tok.upos.as_str())
            && is_word(&tok.surface)
            && !cfg.stoplist.contains(&tok.lemma.to_lowercase())
            && s.dependents(idx)
                .any(|(_, d)| DETERMINER_RELATIONS.contains(&d.deprel.as_str()));
        qualifies.then(|| tok.surface.clone())
    };
    Ok(noun_with_det(&SUBJECT_RELATIONS).zip(noun_with_det(&OBJECT_RELATIONS)))
}

/// Past-tense forms: explicit entries first, then regular spelling rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerbFormLexicon {
    forms: BTreeMap<String, String>,
}

impl Default for VerbFormLexicon {
    /// The bundled irregular-verb list.
    fn default() -> Self {
        let forms = IRREGULAR
            .lines()
            .filter_map(|l| l.split_once(' '))
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        VerbFormLexicon { forms }
    }
}

impl VerbFormLexicon {
    pub fn empty() -> Self {
        VerbFormLexicon {
            forms: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, lemma: &str, past: &str) {
        self.forms.insert(lemma.to_string(), past.to_string());
    }

    /// Adds entries, replacing existing ones. Empty forms are skipped.
    pub fn extend(&mut self, other: VerbFormLexicon) {
        self.forms
            .extend(other.forms.into_iter().filter(|(_, v)| !v.is_empty()));
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn past(&self, lemma: &str) -> String {
        let lemma = lemma.to_lowercase();
        match self.forms.get(&lemma) {
            Some(p) => p.clone(),
            None => regular_past(&lemma),
        }
    }
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Regular `-ed` past tense with e-drop, y-to-i, `-ic` to `-icked`, and
/// final-consonant doubling for one-syllable consonant-vowel-consonant
/// stems.
pub fn regular_past(lemma: &str) -> String {
    let chars: Vec<char> = lemma.chars().collect();
    let n = chars.len();
    if n == 0 {
        return String::new();
    }
    let last = chars[n - 1];
    if last == 'e' {
        return format!("{lemma}d");
    }
    if last == 'y' && n >= 2 && !is_vowel(chars[n - 2]) {
        return format!("{}ied", &lemma[..lemma.len() - 1]);
    }
    if n >= 3 && lemma.ends_with("ic") {
        return format!("{lemma}ked");
    }
    let vowel_groups = chars
        .iter()
        .enumerate()
        .filter(|&(i, &c)| is_vowel(c) && (i == 0 || !is_vowel(chars[i - 1])))
        .count();
    if n >= 3
        && vowel_groups == 1
        && !is_vowel(last)
        && !matches!(last, 'w' | 'x' | 'y')
        && is_vowel(chars[n - 2])
        && !is_vowel(chars[n - 3])
    {
        return format!("{lemma}{last}ed");
    }
    format!("{lemma}ed")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonSentence {
    pub subject_noun: String,
    pub verb_past: String,
    pub object_noun: String,
    pub rendered: String,
    pub sense_tag: String,
    /// Natural-log surprisal of the rendered sentence; set by
    /// [`select_per_sense`].
    #[serde(default)]
    pub surprisal: Option<f64>,
    pub source_id: String,
}

pub fn canonicalize(
    s: &AnnotatedSentence,
    nouns: (String, String),
    lex: &VerbFormLexicon,
) -> CanonSentence {
    let (subject_noun, object_noun) = nouns;
    let verb_past = lex.past(&s.tokens[s.verb_index].lemma);
    CanonSentence {
        rendered: format!("The {subject_noun} {verb_past} the {object_noun}."),
        subject_noun,
        verb_past,
        object_noun,
        sense_tag: s.sense_tag.clone(),
        surprisal: None,
        source_id: s.source_id.clone(),
    }
}

/// Filters and rewrites a batch. Malformed records are reported and
/// skipped.
pub fn canonicalize_all(
    sentences: &[AnnotatedSentence],
    cfg: &FilterConfig,
    lex: &VerbFormLexicon,
) -> (Vec<CanonSentence>, Vec<CanonError>) {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for s in sentences {
        match filter_transitive(s, cfg) {
            Ok(Some(nouns)) => out.push(canonicalize(s, nouns, lex)),
            Ok(None) => {}
            Err(e) => errors.push(e),
        }
    }
    (out, errors)
}

/// Scores every candidate and keeps the `n` lowest-surprisal sentences of
/// each sense, ties broken by source id. Senses with fewer candidates keep
/// all of them; senses with none are absent.
pub fn select_per_sense<L: LanguageModel + ?Sized>(
    candidates: &[CanonSentence],
    lm: &L,
    n: usize,
) -> BTreeMap<String, Vec<CanonSentence>> {
    let mut by_sense: BTreeMap<String, Vec<CanonSentence>> = BTreeMap::new();
    for c in candidates {
        let mut c = c.clone();
        c.surprisal = Some(surprisal(lm, &tokenize(&c.rendered)));
        by_sense.entry(c.sense_tag.clone()).or_default().push(c);
    }
    for list in by_sense.values_mut() {
        list.sort_by(|a, b| {
            a.surprisal
                .unwrap_or(f64::INFINITY)
                .total_cmp(&b.surprisal.unwrap_or(f64::INFINITY))
                .then_with(|| a.source_id.cmp(&b.source_id))
        });
        list.truncate(n);
    }
    by_sense
}

/// Senses whose selection holds fewer than `min` sentences.
pub fn underfilled(selection: &BTreeMap<String, Vec<CanonSentence>>, min: usize) -> Vec<String> {
    selection
        .iter()
        .filter(|(_, v)| v.len() < min)
        .map(|(k, _)| k.clone())
        .collect()
}
