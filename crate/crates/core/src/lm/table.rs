use std::collections::{BTreeMap, HashMap};

use super::{LanguageModel, LmError, Vocab, EOS};
use crate::dist::{TokenDist, NORM_TOLERANCE};

/// Fixed lookup table of next-token distributions, mainly for tests.
///
/// The JSON form maps context strings (tokens joined by spaces) to
/// token-probability objects; `"</s>"` is end-of-sequence. A prefix uses the
/// row of its longest suffix present in the table, falling back to the
/// `""` row and then to a uniform distribution.
#[derive(Debug, Clone)]
pub struct TableLm {
    vocab: Vocab,
    rows: HashMap<Vec<String>, TokenDist>,
    max_context: usize,
}

impl TableLm {
    pub fn new(table: BTreeMap<String, BTreeMap<String, f64>>) -> Result<Self, LmError> {
        let mut types: Vec<String> = table
            .values()
            .flat_map(|row| row.keys().cloned())
            .filter(|t| t != EOS)
            .collect();
        types.sort();
        types.dedup();
        let vocab = Vocab::new(types);
        let mut rows = HashMap::new();
        let mut max_context = 0;
        for (context, row) in table {
            let mut sum = 0.0;
            for (token, &prob) in &row {
                if !(0.0..=1.0).contains(&prob) {
                    return Err(LmError::InvalidProbability {
                        context,
                        token: token.clone(),
                        prob,
                    });
                }
                sum += prob;
            }
            if (sum - 1.0).abs() > NORM_TOLERANCE {
                return Err(LmError::UnnormalizedRow { context, sum });
            }
            let eos = row.get(EOS).copied().unwrap_or(0.0);
            let entries = row.into_iter().filter(|(t, _)| t != EOS);
            let ctx: Vec<String> = context.split_whitespace().map(String::from).collect();
            max_context = max_context.max(ctx.len());
            rows.insert(ctx, TokenDist::from_probs(entries, eos, vocab.len() - 1));
        }
        Ok(TableLm {
            vocab,
            rows,
            max_context,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, LmError> {
        Self::new(serde_json::from_str(text)?)
    }
}

impl LanguageModel for TableLm {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn next_token_dist(&self, prefix: &[String]) -> TokenDist {
        let longest = self.max_context.min(prefix.len());
        for k in (0..=longest).rev() {
            if let Some(d) = self.rows.get(&prefix[prefix.len() - k..]) {
                return d.clone();
            }
        }
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
