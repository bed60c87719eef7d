//! Next-token language models.
//!
//! Models work on word-level tokens produced by [`tokenize`]. Every model
//! shares one contract: given any prefix (out-of-vocabulary tokens are read
//! as the unknown token) it returns a proper distribution over its
//! vocabulary plus end-of-sequence.

mod chain;
mod ngram;
mod table;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{Next, TokenDist};

pub use chain::{apply_sampler_chain, SamplerConfig, REPEAT_WINDOW};
pub use ngram::{train_ngram, NGramModel};
pub use table::TableLm;

pub const UNK: &str = "<unk>";
pub const EOS: &str = "</s>";
pub const BOS: &str = "<s>";

#[derive(Debug, Error)]
pub enum LmError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error("smoothing constant must be positive and finite, got {0}")]
    InvalidSmoothing(f64),
    #[error("table row for context `{context}` sums to {sum}, expected 1")]
    UnnormalizedRow { context: String, sum: f64 },
    #[error("table row for context `{context}` has invalid probability {prob} for `{token}`")]
    InvalidProbability {
        context: String,
        token: String,
        prob: f64,
    },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Ordered token inventory with dense ids. The unknown and end-of-sequence
/// tokens are always members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for t in tokens {
            v.insert(t.into());
        }
        v.insert(UNK.to_string());
        v.insert(EOS.to_string());
        v
    }

    fn insert(&mut self, t: String) {
        if !self.ids.contains_key(&t) {
            self.ids.insert(t.clone(), self.tokens.len());
            self.tokens.push(t);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// The token itself when known, otherwise the unknown token.
    pub fn map<'a>(&self, token: &'a str) -> &'a str {
        if self.contains(token) {
            token
        } else {
            UNK
        }
    }

    /// Ordinary tokens: everything except the unknown and end-of-sequence
    /// markers. This is the expansion set for grammar wildcards.
    pub fn content_tokens(&self) -> Vec<String> {
        self.tokens
            .iter()
            .filter(|t| *t != UNK && *t != EOS)
            .cloned()
            .collect()
    }
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        Vocab::new(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

/// A next-token model. Implementations must be shareable read-only across
/// threads.
pub trait LanguageModel: Send + Sync {
    fn vocab(&self) -> &Vocab;

    /// Distribution over vocabulary tokens (unknown included) and
    /// end-of-sequence, conditioned on `prefix`.
    fn next_token_dist(&self, prefix: &[String]) -> TokenDist;

    /// Probability of one outcome after `prefix`; unknown words take the
    /// unknown token's mass.
    fn outcome_prob(&self, prefix: &[String], next: &Next) -> f64 {
        lookup(self.vocab(), &self.next_token_dist(prefix), next)
    }
}

/// Probability of `next` in a model distribution, mapping unknown words to
/// the unknown token.
pub fn lookup(vocab: &Vocab, dist: &TokenDist, next: &Next) -> f64 {
    match next {
        Next::Token(t) => dist.prob(vocab.map(t)),
        Next::Eos => dist.eos_prob(),
    }
}

/// Negative natural-log likelihood of `sentence` followed by
/// end-of-sequence, conditioned on `context`. Infinite if any factor is
/// zero.
pub fn conditional_surprisal<L: LanguageModel + ?Sized>(
    lm: &L,
    context: &[String],
    sentence: &[String],
) -> f64 {
    step_log_probs(lm, context, sentence)
        .iter()
        .map(|lp| -lp)
        .sum()
}

/// Surprisal of a stand-alone sentence.
pub fn surprisal<L: LanguageModel + ?Sized>(lm: &L, sentence: &[String]) -> f64 {
    conditional_surprisal(lm, &[], sentence)
}

/// Per-step natural-log probabilities of each token and the closing
/// end-of-sequence.
pub fn step_log_probs<L: LanguageModel + ?Sized>(
    lm: &L,
    context: &[String],
    sentence: &[String],
) -> Vec<f64> {
    let mut prefix = context.to_vec();
    let mut out = Vec::with_capacity(sentence.len() + 1);
    for w in sentence {
        out.push(lm.outcome_prob(&prefix, &Next::Token(w.clone())).ln());
        prefix.push(w.clone());
    }
    out.push(lm.outcome_prob(&prefix, &Next::Eos).ln());
    out
}

/// Uniform model over a fixed vocabulary; every outcome including
/// end-of-sequence gets `1 / |vocab|`.
#[derive(Debug, Clone)]
pub struct UniformLm {
    vocab: Vocab,
}

impl UniformLm {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        UniformLm {
            vocab: Vocab::new(tokens),
        }
    }
}

impl LanguageModel for UniformLm {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn next_token_dist(&self, _prefix: &[String]) -> TokenDist {
        let p = 1.0 / self.vocab.len() as f64;
        let entries = self
            .vocab
            .tokens()
            .iter()
            .filter(|t| *t != EOS)
            .map(|t| (t.clone(), p));
        TokenDist::from_probs(entries, p, self.vocab.len() - 1)
    }
}

/// A model loaded from disk: either a trained n-gram dump or a table.
#[derive(Debug, Clone)]
pub enum ModelFile {
    NGram(NGramModel),
    Table(TableLm),
}

impl ModelFile {
    /// Parses a model file. N-gram dumps carry `"format": "ngram"`; any
    /// other JSON object is read as a table specification.
    pub fn from_json(text: &str) -> Result<Self, LmError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("format").and_then(|f| f.as_str()) == Some(ngram::FORMAT) {
            Ok(ModelFile::NGram(NGramModel::from_json(text)?))
        } else {
            Ok(ModelFile::Table(TableLm::from_json(text)?))
        }
    }
}

impl LanguageModel for ModelFile {
    fn vocab(&self) -> &Vocab {
        match self {
            ModelFile::NGram(m) => m.vocab(),
            ModelFile::Table(m) => m.vocab(),
        }
    }

    fn next_token_dist(&self, prefix: &[String]) -> TokenDist {
        match self {
            ModelFile::NGram(m) => m.next_token_dist(prefix),
            ModelFile::Table(m) => m.next_token_dist(prefix),
        }
    }
}

/// Lowercases, splits on whitespace, separates punctuation into its own
/// tokens, and drops sentence-final `.`, `!`, and `?`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if ch.is_alphanumeric() || ((ch == '\'' || ch == '-') && !cur.is_empty()) {
            cur.extend(ch.to_lowercase());
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(ch.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    while matches!(out.last().map(String::as_str), Some("." | "!" | "?")) {
        out.pop();
    }
    out
}

/// Display form of a generated sentence: first token capitalized, tokens
/// joined by spaces, closing period.
pub fn render_sentence(tokens: &[String]) -> String {
    let mut s = tokens.join(" ");
    if let Some(first) = s.chars().next() {
        let upper: String = first.to_uppercase().collect();
        s.replace_range(..first.len_utf8(), &upper);
    }
    s.push('.');
    s
}
