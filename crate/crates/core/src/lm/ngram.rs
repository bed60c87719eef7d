use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{LanguageModel, LmError, Vocab, BOS, EOS};
use crate::dist::TokenDist;

pub(super) const FORMAT: &str = "ngram";
const VERSION: u32 = 1;

/// Add-k smoothed n-gram model over a closed vocabulary.
///
/// Contexts are the previous `order - 1` tokens, left-padded with `<s>`.
/// The outcome space is the whole vocabulary (unknown token and
/// end-of-sequence included), so every context has full support.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    smoothing_k: f64,
    vocab: Vocab,
    counts: HashMap<Vec<String>, BTreeMap<String, u64>>,
    totals: HashMap<Vec<String>, u64>,
}

#[derive(Serialize, Deserialize)]
struct Dump {
    format: String,
    version: u32,
    order: usize,
    smoothing_k: f64,
    vocab: Vocab,
    /// Context joined by single spaces, then outcome counts.
    counts: BTreeMap<String, BTreeMap<String, u64>>,
}

/// Counts n-grams over tokenized sentences. The vocabulary is every type in
/// the corpus in first-seen order, plus the reserved tokens.
pub fn train_ngram<I, S>(corpus: I, order: usize, smoothing_k: f64) -> Result<NGramModel, LmError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[String]>,
{
    if order == 0 {
        return Err(LmError::InvalidOrder);
    }
    if !(smoothing_k > 0.0 && smoothing_k.is_finite()) {
        return Err(LmError::InvalidSmoothing(smoothing_k));
    }
    let sentences: Vec<S> = corpus.into_iter().collect();
    if sentences.iter().all(|s| s.as_ref().is_empty()) {
        return Err(LmError::EmptyCorpus);
    }
    let vocab = Vocab::new(sentences.iter().flat_map(|s| s.as_ref().iter().cloned()));
    let mut counts: HashMap<Vec<String>, BTreeMap<String, u64>> = HashMap::new();
    for s in &sentences {
        let s = s.as_ref();
        if s.is_empty() {
            continue;
        }
        let mut padded: Vec<String> = vec![BOS.to_string(); order - 1];
        padded.extend(s.iter().cloned());
        padded.push(EOS.to_string());
        for i in (order - 1)..padded.len() {
            let ctx = padded[i + 1 - order..i].to_vec();
            *counts
                .entry(ctx)
                .or_default()
                .entry(padded[i].clone())
                .or_insert(0) += 1;
        }
    }
    Ok(NGramModel::assemble(order, smoothing_k, vocab, counts))
}

impl NGramModel {
    fn assemble(
        order: usize,
        smoothing_k: f64,
        vocab: Vocab,
        counts: HashMap<Vec<String>, BTreeMap<String, u64>>,
    ) -> Self {
        let totals = counts
            .iter()
            .map(|(c, m)| (c.clone(), m.values().sum()))
            .collect();
        NGramModel {
            order,
            smoothing_k,
            vocab,
            counts,
            totals,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing_k(&self) -> f64 {
        self.smoothing_k
    }

    /// Raw count of `token` after the exact context `ctx`.
    pub fn count(&self, ctx: &[String], token: &str) -> u64 {
        self.counts
            .get(ctx)
            .and_then(|m| m.get(token))
            .copied()
            .unwrap_or(0)
    }

    fn context(&self, prefix: &[String]) -> Vec<String> {
        let n = self.order - 1;
        let mut ctx: Vec<String> = prefix
            .iter()
            .rev()
            .take(n)
            .map(|t| self.vocab.map(t).to_string())
            .collect();
        ctx.resize(n, BOS.to_string());
        ctx.reverse();
        ctx
    }

    pub fn to_json(&self) -> String {
        let counts = self
            .counts
            .iter()
            .map(|(c, m)| (c.join(" "), m.clone()))
            .collect();
        let dump = Dump {
            format: FORMAT.to_string(),
            version: VERSION,
            order: self.order,
            smoothing_k: self.smoothing_k,
            vocab: self.vocab.clone(),
            counts,
        };
        serde_json::to_string(&dump).expect("n-gram dump serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LmError> {
        let dump: Dump = serde_json::from_str(text)?;
        if dump.version != VERSION {
            return Err(LmError::UnsupportedVersion(dump.version));
        }
        if dump.order == 0 {
            return Err(LmError::InvalidOrder);
        }
        if !(dump.smoothing_k > 0.0 && dump.smoothing_k.is_finite()) {
            return Err(LmError::InvalidSmoothing(dump.smoothing_k));
        }
        let counts = dump
            .counts
            .into_iter()
            .map(|(c, m)| {
                let ctx = if c.is_empty() {
                    Vec::new()
                } else {
                    c.split(' ').map(String::from).collect()
                };
                (ctx, m)
            })
            .collect();
        Ok(Self::assemble(
            dump.order,
            dump.smoothing_k,
            dump.vocab,
            counts,
        ))
    }
}

impl LanguageModel for NGramModel {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn next_token_dist(&self, prefix: &[String]) -> TokenDist {
        let ctx = self.context(prefix);
        let row = self.counts.get(&ctx);
        let total = self.totals.get(&ctx).copied().unwrap_or(0) as f64;
        let k = self.smoothing_k;
        let denom = total + k * self.vocab.len() as f64;
        let p = |t: &str| (row.and_then(|m| m.get(t)).copied().unwrap_or(0) as f64 + k) / denom;
        let entries = self
            .vocab
            .tokens()
            .iter()
            .filter(|t| *t != EOS)
            .map(|t| (t.clone(), p(t)));
        TokenDist::from_probs(entries, p(EOS), self.vocab.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{surprisal, tokenize};

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| tokenize(l)).collect()
    }

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn bigram_add_one() {
        let m = train_ngram(corpus(&["a b", "a b"]), 2, 1.0).unwrap();
        let d = m.next_token_dist(&toks("a"));
        assert!((d.prob("b") - 0.5).abs() < 1e-15);
        assert!((d.total() - 1.0).abs() < 1e-12);
        assert_eq!(m.vocab().len(), 4);
    }

    #[test]
    fn unigram_ignores_context() {
        let m = train_ngram(corpus(&["a a a"]), 1, 0.1).unwrap();
        assert_eq!(m.next_token_dist(&[]), m.next_token_dist(&toks("a a")));
        assert_eq!(m.next_token_dist(&[]), m.next_token_dist(&toks("zzz")));
    }

    #[test]
    fn unseen_context_is_uniform() {
        let m = train_ngram(corpus(&["a b c"]), 3, 0.5).unwrap();
        let d = m.next_token_dist(&toks("c a"));
        let u = 1.0 / m.vocab().len() as f64;
        for (_, p) in d.outcomes() {
            assert!((p - u).abs() < 1e-15);
        }
    }

    #[test]
    fn counts_drive_preference() {
        let m = train_ngram(corpus(&["the cat hit the mat"]), 2, 0.01).unwrap();
        let d = m.next_token_dist(&toks("the"));
        assert!(d.prob("cat") > d.prob("hit"));
    }

    #[test]
    fn training_sentence_beats_shuffle() {
        let m = train_ngram(corpus(&["the cat hit the mat the dog hit the cat"]), 3, 0.1).unwrap();
        let s = toks("the cat hit the mat the dog hit the cat");
        let mut shuffled = s.clone();
        shuffled.reverse();
        assert!(surprisal(&m, &s) < surprisal(&m, &shuffled));
    }

    #[test]
    fn oov_prefix_maps_to_unk() {
        let m = train_ngram(corpus(&["a b"]), 2, 1.0).unwrap();
        assert_eq!(
            m.next_token_dist(&toks("qqq")),
            m.next_token_dist(&["<unk>".to_string()])
        );
    }

    #[test]
    fn json_round_trip() {
        let m = train_ngram(corpus(&["the cat hit the mat", "a dog ran"]), 3, 0.1).unwrap();
        let back = NGramModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let d1 = m.next_token_dist(&toks("the cat"));
        let d2 = back.next_token_dist(&toks("the cat"));
        assert_eq!(d1, d2);
    }

    #[test]
    fn rejects_bad_training_input() {
        assert!(matches!(
            train_ngram(Vec::<Vec<String>>::new(), 2, 0.1),
            Err(LmError::EmptyCorpus)
        ));
        assert!(matches!(
            train_ngram(corpus(&["a"]), 0, 0.1),
            Err(LmError::InvalidOrder)
        ));
        assert!(matches!(
            train_ngram(corpus(&["a"]), 2, 0.0),
            Err(LmError::InvalidSmoothing(_))
        ));
    }
}
