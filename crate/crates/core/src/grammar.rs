//! Probabilistic context-free grammars used as hard syntactic constraints.
//!
//! Grammars are written one rule group per line:
//!
//! ```text
//! # transitive clause with definite arguments
//! S  -> NP VP
//! NP -> D N
//! VP -> V NP
//! V  -> hit
//! D  -> the
//! N  -> .+
//! ```
//!
//! Alternatives are separated by `|` and may carry a trailing `(p)`
//! probability. Alternatives of one left-hand side without an explicit
//! probability share the remaining mass equally. Any right-hand side token
//! that never appears on a left-hand side is a terminal, and the reserved
//! token `.+` is a wildcard standing for a non-empty run of vocabulary
//! tokens. A `%wildcard-continuation <p>` line sets the probability that a
//! wildcard span continues after each token (default `0.1`; `0` restricts
//! wildcards to exactly one token).

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Reserved spelling of the wildcard symbol.
pub const WILDCARD: &str = ".+";
/// Default probability that a wildcard span continues after a token.
pub const DEFAULT_CONTINUATION: f64 = 0.1;
/// Tolerance for per-left-hand-side probability sums.
pub const SUM_TOLERANCE: f64 = 1e-9;

const CONTINUATION_DIRECTIVE: &str = "%wildcard-continuation";
const ANY_TOKEN_NAME: &str = "__any";
const DEFAULT_ENUMERATION_CAP: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("grammar is empty")]
    Empty,
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: empty alternative for `{lhs}` (epsilon rules are not supported)")]
    EpsilonRule { line: usize, lhs: String },
    #[error("line {line}: the wildcard `.+` cannot appear on a left-hand side")]
    WildcardLhs { line: usize },
    #[error("rule probability {prob} for `{lhs}` is outside (0, 1]")]
    InvalidProbability { lhs: String, prob: f64 },
    #[error("probabilities of the rules for `{lhs}` sum to {sum}, expected 1")]
    ProbabilitySum { lhs: String, sum: f64 },
    #[error("nonterminal `{0}` is unreachable from the start symbol")]
    Unreachable(String),
    #[error("nonterminal `{0}` derives no terminal string")]
    Unproductive(String),
    #[error("wildcard continuation {0} must lie in [0, 1)")]
    InvalidContinuation(f64),
    #[error("wildcard expansion needs a non-empty vocabulary")]
    EmptyVocabulary,
    #[error("grammar still contains wildcards; desugar it against a vocabulary first")]
    UndesugaredWildcard,
    #[error("enumeration exceeded {0} derivation steps")]
    EnumerationCap(usize),
    #[error("nonterminal `{0}` is not defined")]
    UnknownNonterminal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Nonterminal(String),
    Terminal(String),
    /// `.+` before desugaring.
    Wildcard,
    /// Hidden nonterminal that rewrites to any single vocabulary token with
    /// equal probability. Only present after desugaring.
    AnyToken,
}

impl Symbol {
    pub fn is_nonterminal(&self) -> bool {
        matches!(self, Symbol::Nonterminal(_))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Nonterminal(name) | Symbol::Terminal(name) => f.write_str(name),
            Symbol::Wildcard => f.write_str(WILDCARD),
            Symbol::AnyToken => f.write_str(ANY_TOKEN_NAME),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub lhs: String,
    pub rhs: Vec<Symbol>,
    pub prob: f64,
}

impl Rule {
    pub fn new(lhs: impl Into<String>, rhs: Vec<Symbol>, prob: f64) -> Self {
        Rule {
            lhs: lhs.into(),
            rhs,
            prob,
        }
    }
}

/// A validated PCFG. Immutable once built; clone freely.
#[derive(Debug, Clone, PartialEq)]
pub struct Pcfg {
    start: String,
    rules: Vec<Rule>,
    wildcard_continuation: f64,
    any_token: Option<Arc<[String]>>,
}

impl Pcfg {
    /// Builds and validates a grammar from explicit rules. The start symbol
    /// must be the left-hand side of at least one rule.
    pub fn new(
        start: impl Into<String>,
        rules: Vec<Rule>,
        wildcard_continuation: f64,
    ) -> Result<Self, GrammarError> {
        let g = Pcfg {
            start: start.into(),
            rules,
            wildcard_continuation,
            any_token: None,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn wildcard_continuation(&self) -> f64 {
        self.wildcard_continuation
    }

    /// Vocabulary of the hidden any-token nonterminal, if desugared.
    pub fn any_token_vocab(&self) -> Option<&[String]> {
        self.any_token.as_deref()
    }

    pub fn has_wildcards(&self) -> bool {
        self.rules
            .iter()
            .any(|r| r.rhs.contains(&Symbol::Wildcard))
    }

    /// Nonterminals in order of first definition.
    pub fn nonterminals(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.rules
            .iter()
            .filter(|r| seen.insert(r.lhs.as_str()))
            .map(|r| r.lhs.as_str())
            .collect()
    }

    /// Terminal symbols in order of first occurrence.
    pub fn terminals(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for rule in &self.rules {
            for sym in &rule.rhs {
                if let Symbol::Terminal(t) = sym {
                    if seen.insert(t.as_str()) {
                        out.push(t.as_str());
                    }
                }
            }
        }
        out
    }

    pub fn rules_for<'a>(&'a self, lhs: &'a str) -> impl Iterator<Item = &'a Rule> + 'a {
        self.rules.iter().filter(move |r| r.lhs == lhs)
    }

    /// Returns a copy with the wildcard continuation probability replaced.
    pub fn with_continuation(&self, continuation: f64) -> Result<Self, GrammarError> {
        let mut g = self.clone();
        g.wildcard_continuation = continuation;
        g.validate()?;
        Ok(g)
    }

    /// Replaces every rule for `lhs` with the single rule `lhs -> token`,
    /// keeping the position of the first one.
    pub fn with_lexical_rule(&self, lhs: &str, token: &str) -> Result<Self, GrammarError> {
        let first = self
            .rules
            .iter()
            .position(|r| r.lhs == lhs)
            .ok_or_else(|| GrammarError::UnknownNonterminal(lhs.to_string()))?;
        let mut g = self.clone();
        g.rules = Vec::with_capacity(self.rules.len());
        for (i, r) in self.rules.iter().enumerate() {
            if i == first {
                g.rules.push(Rule::new(
                    lhs,
                    vec![Symbol::Terminal(token.to_string())],
                    1.0,
                ));
            } else if r.lhs != lhs {
                g.rules.push(r.clone());
            }
        }
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<(), GrammarError> {
        if self.rules.is_empty() {
            return Err(GrammarError::Empty);
        }
        let c = self.wildcard_continuation;
        if !(0.0..1.0).contains(&c) || !c.is_finite() {
            return Err(GrammarError::InvalidContinuation(c));
        }
        let defined: HashSet<&str> = self.rules.iter().map(|r| r.lhs.as_str()).collect();
        if !defined.contains(self.start.as_str()) {
            return Err(GrammarError::Unproductive(self.start.clone()));
        }

        let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
        for rule in &self.rules {
            if rule.lhs == WILDCARD {
                return Err(GrammarError::WildcardLhs { line: 0 });
            }
            if rule.rhs.is_empty() {
                return Err(GrammarError::EpsilonRule {
                    line: 0,
                    lhs: rule.lhs.clone(),
                });
            }
            if !(rule.prob > 0.0 && rule.prob <= 1.0 + SUM_TOLERANCE) {
                return Err(GrammarError::InvalidProbability {
                    lhs: rule.lhs.clone(),
                    prob: rule.prob,
                });
            }
            if rule.rhs.contains(&Symbol::AnyToken) && self.any_token.is_none() {
                return Err(GrammarError::EmptyVocabulary);
            }
            *sums.entry(&rule.lhs).or_default() += rule.prob;
        }
        for (lhs, sum) in sums {
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(GrammarError::ProbabilitySum {
                    lhs: lhs.to_string(),
                    sum,
                });
            }
        }

        // Every nonterminal must be defined and productive.
        let mut productive: HashSet<&str> = HashSet::new();
        loop {
            let before = productive.len();
            for rule in &self.rules {
                if productive.contains(rule.lhs.as_str()) {
                    continue;
                }
                let ok = rule.rhs.iter().all(|s| match s {
                    Symbol::Nonterminal(n) => productive.contains(n.as_str()),
                    _ => true,
                });
                if ok {
                    productive.insert(&rule.lhs);
                }
            }
            if productive.len() == before {
                break;
            }
        }
        for rule in &self.rules {
            if !productive.contains(rule.lhs.as_str()) {
                return Err(GrammarError::Unproductive(rule.lhs.clone()));
            }
            for sym in &rule.rhs {
                if let Symbol::Nonterminal(n) = sym {
                    if !defined.contains(n.as_str()) {
                        return Err(GrammarError::Unproductive(n.clone()));
                    }
                }
            }
        }

        let mut reachable: HashSet<&str> = HashSet::new();
        let mut queue = VecDeque::from([self.start.as_str()]);
        reachable.insert(&self.start);
        while let Some(nt) = queue.pop_front() {
            for rule in self.rules_for(nt) {
                for sym in &rule.rhs {
                    if let Symbol::Nonterminal(n) = sym {
                        if reachable.insert(n) {
                            queue.push_back(n);
                        }
                    }
                }
            }
        }
        for nt in self.nonterminals() {
            if !reachable.contains(nt) {
                return Err(GrammarError::Unreachable(nt.to_string()));
            }
        }
        Ok(())
    }

    /// Replaces every wildcard occurrence by a fresh nonterminal `W` with
    /// `W -> TOK W (λ)` and `W -> TOK (1 - λ)`, where `TOK` rewrites to each
    /// vocabulary token with probability `1 / |vocab|`. Grammars without
    /// wildcards come back unchanged.
    pub fn desugar_wildcards(&self, vocab: &[String]) -> Result<Pcfg, GrammarError> {
        if !self.has_wildcards() {
            return Ok(self.clone());
        }
        let mut seen = HashSet::new();
        let vocab: Vec<String> = vocab
            .iter()
            .filter(|t| seen.insert(t.as_str()))
            .cloned()
            .collect();
        if vocab.is_empty() {
            return Err(GrammarError::EmptyVocabulary);
        }
        let taken: HashSet<String> = self.nonterminals().into_iter().map(String::from).collect();
        let mut counter = 0usize;
        let mut fresh = || loop {
            counter += 1;
            let name = format!("__w{counter}");
            if !taken.contains(&name) {
                return name;
            }
        };

        let lambda = self.wildcard_continuation;
        let mut rules = Vec::with_capacity(self.rules.len());
        let mut hidden = Vec::new();
        for rule in &self.rules {
            let mut rhs = Vec::with_capacity(rule.rhs.len());
            for sym in &rule.rhs {
                if *sym == Symbol::Wildcard {
                    let w = fresh();
                    if lambda > 0.0 {
                        hidden.push(Rule::new(
                            w.clone(),
                            vec![Symbol::AnyToken, Symbol::Nonterminal(w.clone())],
                            lambda,
                        ));
                    }
                    hidden.push(Rule::new(w.clone(), vec![Symbol::AnyToken], 1.0 - lambda));
                    rhs.push(Symbol::Nonterminal(w));
                } else {
                    rhs.push(sym.clone());
                }
            }
            rules.push(Rule::new(rule.lhs.clone(), rhs, rule.prob));
        }
        rules.extend(hidden);
        let g = Pcfg {
            start: self.start.clone(),
            rules,
            wildcard_continuation: lambda,
            any_token: Some(vocab.into()),
        };
        g.validate()?;
        Ok(g)
    }

    /// Renders the grammar in the text format accepted by [`parse_grammar`].
    /// Probabilities are always written explicitly. A desugared grammar has
    /// its any-token nonterminal materialized as ordinary terminal rules.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.wildcard_continuation != DEFAULT_CONTINUATION {
            out.push_str(&format!(
                "{CONTINUATION_DIRECTIVE} {}\n",
                self.wildcard_continuation
            ));
        }
        for nt in self.nonterminals() {
            let alts: Vec<String> = self
                .rules_for(nt)
                .map(|r| {
                    let body: Vec<String> = r.rhs.iter().map(|s| s.to_string()).collect();
                    format!("{} ({})", body.join(" "), r.prob)
                })
                .collect();
            out.push_str(&format!("{nt} -> {}\n", alts.join(" | ")));
        }
        if let Some(vocab) = &self.any_token {
            let p = 1.0 / vocab.len() as f64;
            let alts: Vec<String> = vocab.iter().map(|t| format!("{t} ({p})")).collect();
            out.push_str(&format!("{ANY_TOKEN_NAME} -> {}\n", alts.join(" | ")));
        }
        out
    }
}

impl fmt::Display for Pcfg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Splits `s` on whitespace, yielding each piece with its byte offset.
fn tokens_with_offsets(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in s.char_indices() {
        if ch.is_whitespace() {
            if let Some(st) = start.take() {
                out.push((st, &s[st..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(st) = start {
        out.push((st, &s[st..]));
    }
    out
}

fn column_of(line: &str, byte: usize) -> usize {
    line[..byte].chars().count() + 1
}

struct RawAlt {
    symbols: Vec<String>,
    prob: Option<f64>,
}

/// Parses grammar text. The first left-hand side is the start symbol.
pub fn parse_grammar(text: &str) -> Result<Pcfg, GrammarError> {
    let mut continuation = DEFAULT_CONTINUATION;
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<RawAlt>> = HashMap::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        if line.trim().is_empty() {
            continue;
        }
        if line.trim_start().starts_with('%') {
            let toks = tokens_with_offsets(line);
            if toks[0].1 != CONTINUATION_DIRECTIVE || toks.len() != 2 {
                return Err(GrammarError::Syntax {
                    line: line_no,
                    column: column_of(line, toks[0].0),
                    message: format!("unknown directive `{}`", line.trim()),
                });
            }
            continuation = toks[1].1.parse().map_err(|_| GrammarError::Syntax {
                line: line_no,
                column: column_of(line, toks[1].0),
                message: format!("invalid number `{}`", toks[1].1),
            })?;
            continue;
        }
        let Some(arrow) = line.find("->") else {
            return Err(GrammarError::Syntax {
                line: line_no,
                column: column_of(line, line.len() - line.trim_start().len()),
                message: "expected `->`".into(),
            });
        };
        let lhs_toks = tokens_with_offsets(&line[..arrow]);
        let lhs = match lhs_toks.as_slice() {
            [(_, name)] => *name,
            [] => {
                return Err(GrammarError::Syntax {
                    line: line_no,
                    column: column_of(line, arrow),
                    message: "missing left-hand side".into(),
                })
            }
            [_, (off, _), ..] => {
                return Err(GrammarError::Syntax {
                    line: line_no,
                    column: column_of(line, *off),
                    message: "left-hand side must be a single symbol".into(),
                })
            }
        };
        if lhs == WILDCARD {
            return Err(GrammarError::WildcardLhs { line: line_no });
        }

        let body_start = arrow + 2;
        let body = &line[body_start..];
        let mut alts = Vec::new();
        let mut seg_start = 0;
        for seg in body.split('|') {
            let seg_off = body_start + seg_start;
            seg_start += seg.len() + 1;
            let mut toks = tokens_with_offsets(seg);
            let mut prob = None;
            if let Some(&(off, last)) = toks.last() {
                if last.starts_with('(') {
                    if !last.ends_with(')') || last.len() < 3 {
                        return Err(GrammarError::Syntax {
                            line: line_no,
                            column: column_of(line, seg_off + off),
                            message: format!("malformed probability `{last}`"),
                        });
                    }
                    let p: f64 =
                        last[1..last.len() - 1]
                            .parse()
                            .map_err(|_| GrammarError::Syntax {
                                line: line_no,
                                column: column_of(line, seg_off + off),
                                message: format!("invalid probability `{last}`"),
                            })?;
                    prob = Some(p);
                    toks.pop();
                }
            }
            if toks.is_empty() {
                return Err(GrammarError::EpsilonRule {
                    line: line_no,
                    lhs: lhs.to_string(),
                });
            }
            if let Some(&(off, t)) = toks.iter().find(|(_, t)| *t == "->") {
                return Err(GrammarError::Syntax {
                    line: line_no,
                    column: column_of(line, seg_off + off),
                    message: format!("unexpected `{t}`"),
                });
            }
            alts.push(RawAlt {
                symbols: toks.into_iter().map(|(_, t)| t.to_string()).collect(),
                prob,
            });
        }
        if !groups.contains_key(lhs) {
            order.push(lhs.to_string());
        }
        groups.entry(lhs.to_string()).or_default().extend(alts);
    }

    if order.is_empty() {
        return Err(GrammarError::Empty);
    }
    let defined: HashSet<&str> = order.iter().map(String::as_str).collect();
    let mut rules = Vec::new();
    for lhs in &order {
        let alts = &groups[lhs];
        let explicit: f64 = alts.iter().filter_map(|a| a.prob).sum();
        let implicit = alts.iter().filter(|a| a.prob.is_none()).count();
        let share = if implicit > 0 {
            let rest = 1.0 - explicit;
            if rest <= SUM_TOLERANCE {
                return Err(GrammarError::ProbabilitySum {
                    lhs: lhs.clone(),
                    sum: explicit,
                });
            }
            rest / implicit as f64
        } else {
            0.0
        };
        for alt in alts {
            let rhs = alt
                .symbols
                .iter()
                .map(|s| {
                    if s == WILDCARD {
                        Symbol::Wildcard
                    } else if defined.contains(s.as_str()) {
                        Symbol::Nonterminal(s.clone())
                    } else {
                        Symbol::Terminal(s.clone())
                    }
                })
                .collect();
            let prob = alt.prob.unwrap_or(share);
            if !(prob > 0.0 && prob <= 1.0) {
                return Err(GrammarError::InvalidProbability {
                    lhs: lhs.clone(),
                    prob,
                });
            }
            rules.push(Rule::new(lhs.clone(), rhs, prob));
        }
    }
    Pcfg::new(order[0].clone(), rules, continuation)
}

/// Enumerates every string of at most `max_len` tokens together with the
/// sum of its derivation probabilities. Exhaustive; intended as a
/// brute-force reference for small grammars.
pub fn language_enumerate(
    g: &Pcfg,
    max_len: usize,
) -> Result<Vec<(Vec<String>, f64)>, GrammarError> {
    language_enumerate_capped(g, max_len, DEFAULT_ENUMERATION_CAP)
}

/// [`language_enumerate`] with an explicit cap on expansion steps.
pub fn language_enumerate_capped(
    g: &Pcfg,
    max_len: usize,
    cap: usize,
) -> Result<Vec<(Vec<String>, f64)>, GrammarError> {
    if g.has_wildcards() {
        return Err(GrammarError::UndesugaredWildcard);
    }
    // Integer-coded symbols: nonterminals are >= 0, terminals are encoded
    // as -(id + 1), and the any-token class is i32::MIN.
    const ANY: i32 = i32::MIN;
    let nts = g.nonterminals();
    let nt_id: HashMap<&str, i32> = nts
        .iter()
        .enumerate()
        .map(|(i, n)| (*n, i as i32))
        .collect();
    let mut terms: Vec<String> = Vec::new();
    let mut term_id: HashMap<String, i32> = HashMap::new();
    let mut intern = |t: &str, terms: &mut Vec<String>| -> i32 {
        if let Some(&id) = term_id.get(t) {
            return id;
        }
        let id = terms.len() as i32;
        terms.push(t.to_string());
        term_id.insert(t.to_string(), id);
        id
    };
    let any_vocab: Vec<i32> = g
        .any_token_vocab()
        .unwrap_or(&[])
        .iter()
        .map(|t| intern(t, &mut terms))
        .collect();
    let any_p = if any_vocab.is_empty() {
        0.0
    } else {
        1.0 / any_vocab.len() as f64
    };
    let mut by_lhs: Vec<Vec<(Vec<i32>, f64)>> = vec![Vec::new(); nts.len()];
    for rule in g.rules() {
        let rhs = rule
            .rhs
            .iter()
            .map(|s| match s {
                Symbol::Nonterminal(n) => nt_id[n.as_str()],
                Symbol::Terminal(t) => -(intern(t, &mut terms) + 1),
                Symbol::AnyToken => ANY,
                Symbol::Wildcard => unreachable!(),
            })
            .collect();
        by_lhs[nt_id[rule.lhs.as_str()] as usize].push((rhs, rule.prob));
    }

    let mut results: HashMap<Vec<i32>, f64> = HashMap::new();
    // (emitted terminals, pending symbols reversed, probability)
    let mut stack: Vec<(Vec<i32>, Vec<i32>, f64)> = vec![(Vec::new(), vec![nt_id[g.start()]], 1.0)];
    let mut steps = 0usize;
    while let Some((mut out, mut pending, p)) = stack.pop() {
        steps += 1;
        if steps > cap {
            return Err(GrammarError::EnumerationCap(cap));
        }
        // Emit leading terminals.
        while let Some(&sym) = pending.last() {
            if sym < 0 && sym != ANY {
                out.push(-sym - 1);
                pending.pop();
            } else {
                break;
            }
        }
        if out.len() + pending.len() > max_len {
            continue;
        }
        let Some(sym) = pending.pop() else {
            *results.entry(out).or_default() += p;
            continue;
        };
        if sym == ANY {
            for &t in &any_vocab {
                let mut o = out.clone();
                o.push(t);
                stack.push((o, pending.clone(), p * any_p));
            }
        } else {
            for (rhs, rp) in &by_lhs[sym as usize] {
                let mut next = pending.clone();
                next.extend(rhs.iter().rev());
                stack.push((out.clone(), next, p * rp));
            }
        }
    }

    let mut list: Vec<(Vec<String>, f64)> = results
        .into_iter()
        .map(|(ids, p)| (ids.iter().map(|&i| terms[i as usize].clone()).collect(), p))
        .collect();
    list.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
    Ok(list)
}
