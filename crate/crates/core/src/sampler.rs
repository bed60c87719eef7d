//! Grammar-constrained sampling and the generation loop.
//!
//! At every step the language model's next-token distribution is
//! multiplied pointwise with the parser's constraint distribution (end of
//! sequence included), renormalized, passed through the sampler chain, and
//! sampled. This is locally normalized: earlier words are never adjusted
//! for constraints that only bite later, which [`divergence_report`]
//! measures against the globally conditioned distribution that rejection
//! sampling targets.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dist::{Next, TokenDist};
use crate::earley::{ParseError, Parser, ParserState};
use crate::grammar::{parse_grammar, GrammarError, Pcfg};
use crate::lm::{
    apply_sampler_chain, conditional_surprisal, lookup, render_sentence, tokenize, LanguageModel,
    LmError, SamplerConfig, REPEAT_WINDOW,
};
use crate::rng::{substream, Stream};

pub const VERB_SLOT: &str = "{{VERB}}";
pub const GLOSS_SLOT: &str = "{{SENSE_GLOSS}}";

pub const DEFAULT_PROMPT_TEMPLATE: &str =
    r#"An example of a sentence containing the verb "{{VERB}}" in the sense "{{SENSE_GLOSS}}":"#;

/// Transitive clause with definite subject and object. Nouns are single
/// tokens; the verb rule is replaced per request.
pub const DEFAULT_GRAMMAR: &str = "\
%wildcard-continuation 0
S -> NP VP
NP -> D N
VP -> V NP
V -> hit
D -> the
N -> .+
";

/// Nonterminal whose rule is replaced by the requested past-tense verb.
pub const VERB_NONTERMINAL: &str = "V";

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("dead end after prefix {prefix:?}: no continuation has mass under both the model and the grammar")]
    DeadEnd { prefix: Vec<String> },
    #[error("no sample accepted after {0} attempts")]
    AttemptsExhausted(usize),
    #[error("prompt template is missing the {0} slot")]
    MissingSlot(&'static str),
    #[error("enumeration exceeded {0} nodes")]
    EnumerationCap(usize),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Config(#[from] LmError),
}

/// Substitutes both slots verbatim and tokenizes the result.
pub fn render_prompt(template: &str, verb: &str, gloss: &str) -> Result<Vec<String>, SampleError> {
    if !template.contains(VERB_SLOT) {
        return Err(SampleError::MissingSlot(VERB_SLOT));
    }
    if !template.contains(GLOSS_SLOT) {
        return Err(SampleError::MissingSlot(GLOSS_SLOT));
    }
    // split on one slot and substitute the other inside each piece so that
    // substituted text is never rescanned
    let text = template
        .split(VERB_SLOT)
        .map(|piece| piece.replace(GLOSS_SLOT, gloss))
        .collect::<Vec<_>>()
        .join(verb);
    Ok(tokenize(&text))
}

/// The renormalized product of the model's next-token distribution after
/// `context` and the parser's constraint distribution. `None` when the
/// product has no mass.
pub fn constrained_dist<L: LanguageModel + ?Sized>(
    lm: &L,
    state: &ParserState,
    context: &[String],
) -> Option<TokenDist> {
    let c = state.next_dist();
    let q = lm.next_token_dist(context);
    let vocab = lm.vocab();
    let entries = c
        .entries()
        .iter()
        .map(|(t, p)| (t.clone(), p * lookup(vocab, &q, &Next::Token(t.clone()))))
        .collect::<Vec<_>>();
    TokenDist::from_weights(entries, c.eos_prob() * q.eos_prob(), c.domain_size())
}

fn history(context: &[String]) -> &[String] {
    &context[context.len().saturating_sub(REPEAT_WINDOW)..]
}

/// A generated continuation, prompt excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub tokens: Vec<String>,
    /// True when end-of-sequence was drawn; false when the token budget ran
    /// out first.
    pub terminated: bool,
}

/// Draws one constrained sample seeded from `cfg.seed`.
pub fn sample_constrained<L: LanguageModel + ?Sized>(
    lm: &L,
    parser: &Parser,
    prompt: &[String],
    cfg: &SamplerConfig,
) -> Result<Sample, SampleError> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, Stream::Generation);
    sample_constrained_with(lm, parser, prompt, cfg, &mut rng)
}

/// Constrained sampling with a caller-supplied generator. Up to
/// `cfg.max_tokens` tokens are emitted; end-of-sequence may still be drawn
/// once the budget is used up.
pub fn sample_constrained_with<L: LanguageModel + ?Sized, R: Rng + ?Sized>(
    lm: &L,
    parser: &Parser,
    prompt: &[String],
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Sample, SampleError> {
    let mut state = parser.start();
    let mut context = prompt.to_vec();
    let mut tokens = Vec::new();
    loop {
        let d = constrained_dist(lm, &state, &context).ok_or_else(|| SampleError::DeadEnd {
            prefix: tokens.clone(),
        })?;
        let d = apply_sampler_chain(&d, cfg, history(&context));
        match d.sample(rng) {
            Next::Eos => {
                return Ok(Sample {
                    tokens,
                    terminated: true,
                })
            }
            Next::Token(t) => {
                if tokens.len() >= cfg.max_tokens {
                    return Ok(Sample {
                        tokens,
                        terminated: false,
                    });
                }
                state = state.advance(&t)?;
                context.push(t.clone());
                tokens.push(t);
            }
        }
    }
}

/// Unconstrained sampling with the sampler chain, same budget rule as the
/// constrained sampler.
pub fn sample_free<L: LanguageModel + ?Sized, R: Rng + ?Sized>(
    lm: &L,
    prompt: &[String],
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Sample {
    let mut context = prompt.to_vec();
    let mut tokens = Vec::new();
    loop {
        let d = apply_sampler_chain(&lm.next_token_dist(&context), cfg, history(&context));
        match d.sample(rng) {
            Next::Eos => {
                return Sample {
                    tokens,
                    terminated: true,
                }
            }
            Next::Token(t) => {
                if tokens.len() >= cfg.max_tokens {
                    return Sample {
                        tokens,
                        terminated: false,
                    };
                }
                context.push(t.clone());
                tokens.push(t);
            }
        }
    }
}

/// Whether `tokens` is a complete string of the grammar.
pub fn accepts(parser: &Parser, tokens: &[String]) -> bool {
    let mut state = parser.start();
    for t in tokens {
        match state.advance(t) {
            Ok(s) => state = s,
            Err(_) => return false,
        }
    }
    state.string_probability() > 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionSample {
    pub tokens: Vec<String>,
    /// Attempts used, including the accepted one.
    pub attempts: usize,
}

/// Samples unconstrained strings until one is in the grammar's language.
pub fn sample_rejection<L: LanguageModel + ?Sized>(
    lm: &L,
    parser: &Parser,
    prompt: &[String],
    cfg: &SamplerConfig,
    max_attempts: usize,
) -> Result<RejectionSample, SampleError> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, Stream::Generation);
    for attempt in 1..=max_attempts {
        let s = sample_free(lm, prompt, cfg, &mut rng);
        if s.terminated && accepts(parser, &s.tokens) {
            return Ok(RejectionSample {
                tokens: s.tokens,
                attempts: attempt,
            });
        }
    }
    Err(SampleError::AttemptsExhausted(max_attempts))
}

/// Exact comparison of the constrained sampler with the globally
/// conditioned distribution, by enumeration up to `cfg.max_tokens` tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    /// Total-variation distance between the two normalized distributions.
    pub tv: f64,
    /// Probability that an unconstrained (chain-filtered) draw lands in the
    /// language: the acceptance rate of rejection sampling.
    pub acceptance_rate: f64,
    /// Constrained-sampler mass lost to dead ends.
    pub local_dead_end_mass: f64,
    /// Constrained-sampler mass on strings longer than the budget.
    pub local_truncated_mass: f64,
    pub local: BTreeMap<String, f64>,
    pub global: BTreeMap<String, f64>,
}

pub const DEFAULT_DIVERGENCE_CAP: usize = 1_000_000;

pub fn divergence_report<L: LanguageModel + ?Sized>(
    lm: &L,
    parser: &Parser,
    prompt: &[String],
    cfg: &SamplerConfig,
    cap: usize,
) -> Result<DivergenceReport, SampleError> {
    cfg.validate()?;
    struct Walk<'a, L: ?Sized> {
        lm: &'a L,
        cfg: &'a SamplerConfig,
        cap: usize,
        nodes: usize,
        local: BTreeMap<Vec<String>, f64>,
        global: BTreeMap<Vec<String>, f64>,
        dead: f64,
        truncated: f64,
    }

    impl<L: LanguageModel + ?Sized> Walk<'_, L> {
        fn visit(
            &mut self,
            state: &ParserState,
            context: &mut Vec<String>,
            out: &mut Vec<String>,
            p_local: f64,
            p_global: f64,
        ) -> Result<(), SampleError> {
            self.nodes += 1;
            if self.nodes > self.cap {
                return Err(SampleError::EnumerationCap(self.cap));
            }
            let c = state.next_dist();
            let local = if p_local > 0.0 {
                match constrained_dist(self.lm, state, context) {
                    Some(d) => Some(apply_sampler_chain(&d, self.cfg, history(context))),
                    None => {
                        self.dead += p_local;
                        None
                    }
                }
            } else {
                None
            };
            let global = (p_global > 0.0).then(|| {
                apply_sampler_chain(
                    &self.lm.next_token_dist(context),
                    self.cfg,
                    history(context),
                )
            });
            let vocab = self.lm.vocab();
            let pl = |o: &Next| local.as_ref().map_or(0.0, |d| p_local * d.outcome_prob(o));
            let pg = |o: &Next| {
                global
                    .as_ref()
                    .map_or(0.0, |d| p_global * lookup(vocab, d, o))
            };

            if c.eos_prob() > 0.0 {
                let (l, g) = (pl(&Next::Eos), pg(&Next::Eos));
                if l > 0.0 {
                    *self.local.entry(out.clone()).or_default() += l;
                }
                if g > 0.0 {
                    *self.global.entry(out.clone()).or_default() += g;
                }
            }
            for tok in c.entries().keys() {
                let o = Next::Token(tok.clone());
                let (l, g) = (pl(&o), pg(&o));
                if l == 0.0 && g == 0.0 {
                    continue;
                }
                if out.len() >= self.cfg.max_tokens {
                    self.truncated += l;
                    continue;
                }
                let next = state.advance(tok)?;
                context.push(tok.clone());
                out.push(tok.clone());
                self.visit(&next, context, out, l, g)?;
                context.pop();
                out.pop();
            }
            Ok(())
        }
    }

    let mut walk = Walk {
        lm,
        cfg,
        cap,
        nodes: 0,
        local: BTreeMap::new(),
        global: BTreeMap::new(),
        dead: 0.0,
        truncated: 0.0,
    };
    walk.visit(
        &parser.start(),
        &mut prompt.to_vec(),
        &mut Vec::new(),
        1.0,
        1.0,
    )?;

    let normalize = |m: BTreeMap<Vec<String>, f64>| -> (f64, BTreeMap<String, f64>) {
        let total: f64 = m.values().sum();
        let out = m
            .into_iter()
            .map(|(k, v)| (k.join(" "), if total > 0.0 { v / total } else { 0.0 }))
            .collect();
        (total, out)
    };
    let (_, local) = normalize(walk.local);
    let (acceptance_rate, global) = normalize(walk.global);
    let keys: HashSet<&String> = local.keys().chain(global.keys()).collect();
    let tv = 0.5
        * keys
            .into_iter()
            .map(|k| {
                (local.get(k).copied().unwrap_or(0.0) - global.get(k).copied().unwrap_or(0.0)).abs()
            })
            .sum::<f64>();
    Ok(DivergenceReport {
        tv,
        acceptance_rate,
        local_dead_end_mass: walk.dead,
        local_truncated_mass: walk.truncated,
        local,
        global,
    })
}

fn default_n_unique() -> usize {
    10
}
fn default_n_keep() -> usize {
    4
}
fn default_max_seeds() -> usize {
    100
}
fn default_max_temps() -> usize {
    100
}
fn default_temp_step() -> f64 {
    0.1
}
fn default_template() -> String {
    DEFAULT_PROMPT_TEMPLATE.to_string()
}
fn default_grammar() -> Pcfg {
    parse_grammar(DEFAULT_GRAMMAR).expect("built-in grammar parses")
}

mod grammar_text {
    use super::*;

    pub fn serialize<S: Serializer>(g: &Pcfg, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&g.render())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Pcfg, D::Error> {
        let text = String::deserialize(d)?;
        parse_grammar(&text).map_err(serde::de::Error::custom)
    }
}

/// One verb-sense generation job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenRequest {
    pub verb: String,
    pub verb_past: String,
    pub sense_gloss: String,
    /// Template grammar; its `V` rule is replaced by `verb_past`.
    #[serde(with = "grammar_text", default = "default_grammar")]
    pub grammar: Pcfg,
    #[serde(default = "default_template")]
    pub prompt_template: String,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default = "default_n_unique")]
    pub n_unique: usize,
    #[serde(default = "default_n_keep")]
    pub n_keep: usize,
    #[serde(default = "default_max_seeds")]
    pub max_seeds: usize,
    #[serde(default = "default_max_temps")]
    pub max_temps: usize,
    #[serde(default = "default_temp_step")]
    pub temp_step: f64,
}

impl GenRequest {
    pub fn new(verb: &str, verb_past: &str, sense_gloss: &str) -> Self {
        GenRequest {
            verb: verb.to_string(),
            verb_past: verb_past.to_string(),
            sense_gloss: sense_gloss.to_string(),
            grammar: default_grammar(),
            prompt_template: default_template(),
            sampler: SamplerConfig::default(),
            n_unique: default_n_unique(),
            n_keep: default_n_keep(),
            max_seeds: default_max_seeds(),
            max_temps: default_max_temps(),
            temp_step: default_temp_step(),
        }
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        let bad = |m: &str| Err(SampleError::InvalidRequest(m.to_string()));
        if self.n_unique == 0 {
            return bad("n_unique must be positive");
        }
        if self.n_keep > self.n_unique {
            return bad("n_keep must not exceed n_unique");
        }
        if !(self.temp_step > 0.0 && self.temp_step.is_finite()) {
            return bad("temp_step must be positive");
        }
        if self.verb_past.split_whitespace().count() != 1 {
            return bad("verb_past must be a single token");
        }
        self.sampler.validate()?;
        Ok(())
    }

    /// The request grammar with the verb rule instantiated. Grammars
    /// without a `V` nonterminal are used unchanged.
    pub fn instantiated_grammar(&self) -> Result<Pcfg, SampleError> {
        let past = self.verb_past.to_lowercase();
        match self.grammar.with_lexical_rule(VERB_NONTERMINAL, &past) {
            Ok(g) => Ok(g),
            Err(GrammarError::UnknownNonterminal(_)) => Ok(self.grammar.clone()),
            Err(e) => Err(e.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSentence {
    pub tokens: Vec<String>,
    pub text: String,
    /// Natural-log surprisal of the sentence given the prompt.
    pub surprisal: f64,
    pub seed: u64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenResult {
    pub verb: String,
    pub sense_gloss: String,
    /// Kept sentences, ascending by surprisal.
    pub sentences: Vec<GenSentence>,
    /// Unique sentences found before reranking.
    pub unique_found: usize,
    /// True when fewer than `n_unique` unique sentences were found.
    pub exhausted: bool,
    pub attempts: usize,
    pub dead_ends: usize,
    pub truncated: usize,
}

/// Temperature used at schedule step `step`, rounded so that repeated
/// increments print cleanly.
fn scheduled_temperature(start: f64, step_size: f64, step: usize) -> f64 {
    let t = start + step_size * step as f64;
    (t * 1e9).round() / 1e9
}

/// Collects unique constrained samples, one seed per call. After
/// `max_seeds` calls at one temperature without reaching `n_unique`, the
/// temperature rises by `temp_step`. The kept sentences are the `n_keep`
/// with lowest surprisal.
pub fn generate_unique<L: LanguageModel + ?Sized>(
    req: &GenRequest,
    lm: &L,
) -> Result<GenResult, SampleError> {
    req.validate()?;
    let grammar = req
        .instantiated_grammar()?
        .desugar_wildcards(&lm.vocab().content_tokens())?;
    let parser = Parser::new(&grammar)?;
    let prompt = render_prompt(&req.prompt_template, &req.verb, &req.sense_gloss)?;

    let mut seen = HashSet::new();
    let mut found: Vec<(Vec<String>, u64, f64)> = Vec::new();
    let mut seed = req.sampler.seed;
    let (mut attempts, mut dead_ends, mut truncated) = (0, 0, 0);
    'schedule: for step in 0..req.max_temps {
        let temperature = scheduled_temperature(req.sampler.temperature, req.temp_step, step);
        let cfg = SamplerConfig {
            temperature,
            ..req.sampler.clone()
        };
        for _ in 0..req.max_seeds {
            if found.len() >= req.n_unique {
                break 'schedule;
            }
            let mut rng = substream(seed, Stream::Generation);
            attempts += 1;
            match sample_constrained_with(lm, &parser, &prompt, &cfg, &mut rng) {
                Ok(s) if s.terminated => {
                    let key = s.tokens.join(" ").to_lowercase();
                    if seen.insert(key) {
                        found.push((s.tokens, seed, temperature));
                    }
                }
                Ok(_) => truncated += 1,
                Err(SampleError::DeadEnd { .. }) => dead_ends += 1,
                Err(e) => return Err(e),
            }
            seed = seed.wrapping_add(1);
        }
    }

    let unique_found = found.len();
    let mut sentences: Vec<GenSentence> = found
        .into_iter()
        .map(|(tokens, seed, temperature)| GenSentence {
            surprisal: conditional_surprisal(lm, &prompt, &tokens),
            text: render_sentence(&tokens),
            tokens,
            seed,
            temperature,
        })
        .collect();
    sentences.sort_by(|a, b| a.surprisal.total_cmp(&b.surprisal));
    sentences.truncate(req.n_keep);
    Ok(GenResult {
        verb: req.verb.clone(),
        sense_gloss: req.sense_gloss.clone(),
        sentences,
        unique_found,
        exhausted: unique_found < req.n_unique,
        attempts,
        dead_ends,
        truncated,
    })
}
