//! Incremental probabilistic Earley parsing with prefix probabilities.
//!
//! Each chart item carries a forward probability (the total probability of
//! all derivation paths from the start symbol that reach the item) and an
//! inner probability (the probability of the item's own sub-derivation).
//! Prediction and completion chains through left-corner and unit
//! productions are collapsed with the closure matrices
//! `R_L = (I - P_L)^-1` and `R_U = (I - P_U)^-1`, so left recursion and
//! unit cycles terminate. Chart probabilities live in log space.
//!
//! The hidden any-token class produced by wildcard desugaring is scanned
//! directly: an item expecting it matches every class token with weight
//! `1 / |class|`, so the chart never materializes one rule per token.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::dist::TokenDist;
use crate::grammar::{Pcfg, Symbol};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("grammar still contains wildcards; desugar it against a vocabulary first")]
    UndesugaredWildcard,
    #[error("{relation} closure matrix is singular: cyclic {relation} mass reaches 1")]
    SingularClosure { relation: &'static str },
    #[error("grammar is not consistent: the expected number of expansions is unbounded")]
    Inconsistent,
    #[error("token `{token}` has zero probability after the current prefix ({allowed} outcomes allowed)")]
    RejectedToken { token: String, allowed: usize },
}

#[inline]
fn ln_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sym {
    Nt(u32),
    Term(u32),
    Any,
}

#[derive(Debug)]
struct CRule {
    lhs: u32,
    rhs: Vec<Sym>,
    ln_prob: f64,
    /// Completed items of this rule are never used as completers: either
    /// unit productions (covered by `R_U`) or the virtual root rule.
    passive: bool,
}

#[derive(Debug)]
struct AnyClass {
    tokens: Vec<String>,
    members: HashSet<String>,
    ln_weight: f64,
}

#[derive(Debug)]
struct Compiled {
    terminals: Vec<String>,
    term_ids: HashMap<String, u32>,
    rules: Vec<CRule>,
    root: u32,
    by_lhs: Vec<Vec<u32>>,
    any: Option<AnyClass>,
    /// For each nonterminal Z: every Y with R_L(Z, Y) > 0, as ln R_L.
    left_corner: Vec<Vec<(u32, f64)>>,
    /// For each nonterminal Y: every Z with R_U(Z, Y) > 0, as ln R_U.
    unit_parents: Vec<Vec<(u32, f64)>>,
    domain_size: usize,
}

/// Computes `(I - m)^-1` by Gauss-Jordan elimination. For a non-negative
/// `m` the inverse exists with non-negative entries exactly when the
/// spectral radius of `m` is below one; anything else yields `None`.
fn closure(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| f64::from(i == j) - m[i][j]).collect();
            row.extend((0..n).map(|j| f64::from(i == j)));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        let inv = 1.0 / a[col][col];
        for v in a[col].iter_mut() {
            *v *= inv;
        }
        for r in 0..n {
            if r != col && a[r][col] != 0.0 {
                let f = a[r][col];
                for c in 0..2 * n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let v = a[i][n + j];
            if !v.is_finite() || v < -1e-9 {
                return None;
            }
            out[i][j] = v.max(0.0);
        }
    }
    Some(out)
}

impl Compiled {
    fn new(g: &Pcfg) -> Result<Self, ParseError> {
        if g.has_wildcards() {
            return Err(ParseError::UndesugaredWildcard);
        }
        let nts = g.nonterminals();
        let n = nts.len();
        let nt_id: HashMap<&str, u32> = nts
            .iter()
            .enumerate()
            .map(|(i, s)| (*s, i as u32))
            .collect();
        let mut terminals = Vec::new();
        let mut term_ids = HashMap::new();
        let mut rules = Vec::with_capacity(g.rules().len() + 1);
        let mut by_lhs = vec![Vec::new(); n];
        for rule in g.rules() {
            let rhs: Vec<Sym> = rule
                .rhs
                .iter()
                .map(|s| match s {
                    Symbol::Nonterminal(name) => Sym::Nt(nt_id[name.as_str()]),
                    Symbol::Terminal(t) => {
                        let next = terminals.len() as u32;
                        let id = *term_ids.entry(t.clone()).or_insert_with(|| {
                            terminals.push(t.clone());
                            next
                        });
                        Sym::Term(id)
                    }
                    Symbol::AnyToken => Sym::Any,
                    Symbol::Wildcard => unreachable!("checked above"),
                })
                .collect();
            let lhs = nt_id[rule.lhs.as_str()];
            let passive = matches!(rhs.as_slice(), [Sym::Nt(_)]);
            by_lhs[lhs as usize].push(rules.len() as u32);
            rules.push(CRule {
                lhs,
                rhs,
                ln_prob: rule.prob.ln(),
                passive,
            });
        }
        let root = rules.len() as u32;
        rules.push(CRule {
            lhs: n as u32,
            rhs: vec![Sym::Nt(nt_id[g.start()])],
            ln_prob: 0.0,
            passive: true,
        });

        let mut p_left = vec![vec![0.0; n]; n];
        let mut p_unit = vec![vec![0.0; n]; n];
        let mut mean = vec![vec![0.0; n]; n];
        for rule in &rules[..root as usize] {
            let x = rule.lhs as usize;
            let p = rule.ln_prob.exp();
            if let Sym::Nt(y) = rule.rhs[0] {
                p_left[x][y as usize] += p;
                if rule.rhs.len() == 1 {
                    p_unit[x][y as usize] += p;
                }
            }
            for s in &rule.rhs {
                if let Sym::Nt(y) = s {
                    mean[x][*y as usize] += p;
                }
            }
        }
        let r_left = closure(&p_left).ok_or(ParseError::SingularClosure {
            relation: "left-corner",
        })?;
        let r_unit = closure(&p_unit).ok_or(ParseError::SingularClosure {
            relation: "unit-production",
        })?;
        closure(&mean).ok_or(ParseError::Inconsistent)?;

        let left_corner = (0..n)
            .map(|z| {
                (0..n)
                    .filter(|&y| r_left[z][y] > 0.0)
                    .map(|y| (y as u32, r_left[z][y].ln()))
                    .collect()
            })
            .collect();
        let unit_parents = (0..n)
            .map(|y| {
                (0..n)
                    .filter(|&z| r_unit[z][y] > 0.0)
                    .map(|z| (z as u32, r_unit[z][y].ln()))
                    .collect()
            })
            .collect();

        let any = g.any_token_vocab().map(|vocab| AnyClass {
            tokens: vocab.to_vec(),
            members: vocab.iter().cloned().collect(),
            ln_weight: -(vocab.len() as f64).ln(),
        });
        let mut domain: HashSet<&str> = terminals.iter().map(String::as_str).collect();
        if let Some(a) = &any {
            domain.extend(a.tokens.iter().map(String::as_str));
        }
        let domain_size = domain.len();

        Ok(Compiled {
            terminals,
            term_ids,
            rules,
            root,
            by_lhs,
            any,
            left_corner,
            unit_parents,
            domain_size,
        })
    }

    fn next_sym(&self, item: &Item) -> Option<Sym> {
        self.rules[item.rule as usize]
            .rhs
            .get(item.dot as usize)
            .copied()
    }

    fn is_complete(&self, item: &Item) -> bool {
        item.dot as usize == self.rules[item.rule as usize].rhs.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct Item {
    rule: u32,
    dot: u32,
    start: u32,
    /// ln forward probability
    alpha: f64,
    /// ln inner probability
    gamma: f64,
}

#[derive(Debug)]
struct ItemSet {
    items: Vec<Item>,
    /// Items whose dot precedes a given nonterminal.
    waiting: HashMap<u32, Vec<u32>>,
    ln_prefix: f64,
}

type Key = (u32, u32, u32);

/// A compiled grammar from which parser states are created. Cheap to clone
/// and safe to share across threads.
#[derive(Debug, Clone)]
pub struct Parser {
    grammar: Arc<Compiled>,
}

impl Parser {
    /// Compiles a desugared, epsilon-free grammar. Fails on leftover
    /// wildcards, inconsistent grammars, and singular closure matrices.
    pub fn new(g: &Pcfg) -> Result<Self, ParseError> {
        Ok(Parser {
            grammar: Arc::new(Compiled::new(g)?),
        })
    }

    /// State with nothing consumed yet.
    pub fn start(&self) -> ParserState {
        let g = &self.grammar;
        let root = Item {
            rule: g.root,
            dot: 0,
            start: 0,
            alpha: 0.0,
            gamma: 0.0,
        };
        let set = close(g, &[], vec![root], 0.0);
        ParserState {
            grammar: Arc::clone(&self.grammar),
            consumed: Vec::new(),
            sets: vec![Arc::new(set)],
        }
    }

    /// Number of distinct tokens the grammar can ever emit.
    pub fn domain_size(&self) -> usize {
        self.grammar.domain_size
    }
}

/// Runs completion then prediction on a freshly scanned set.
fn close(g: &Compiled, prev: &[Arc<ItemSet>], mut items: Vec<Item>, ln_prefix: f64) -> ItemSet {
    let pos = prev.len() as u32;
    let mut index: HashMap<Key, usize> = items
        .iter()
        .enumerate()
        .map(|(i, it)| ((it.rule, it.dot, it.start), i))
        .collect();

    // Completion, processed by decreasing start position so every completer
    // has received all of its contributions before it is used.
    let mut queue: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        if g.is_complete(it) && !g.rules[it.rule as usize].passive {
            queue.entry(it.start).or_default().push(i);
        }
    }
    while let Some((j, completers)) = queue.pop_last() {
        let origin = &prev[j as usize];
        for idx in completers {
            let done = items[idx];
            let y = g.rules[done.rule as usize].lhs;
            for &(z, ln_ru) in &g.unit_parents[y as usize] {
                let Some(waiting) = origin.waiting.get(&z) else {
                    continue;
                };
                for &w in waiting {
                    let parent = origin.items[w as usize];
                    let key = (parent.rule, parent.dot + 1, parent.start);
                    let alpha = parent.alpha + ln_ru + done.gamma;
                    let gamma = parent.gamma + ln_ru + done.gamma;
                    match index.get(&key) {
                        Some(&k) => {
                            items[k].alpha = ln_add(items[k].alpha, alpha);
                            items[k].gamma = ln_add(items[k].gamma, gamma);
                        }
                        None => {
                            let item = Item {
                                rule: key.0,
                                dot: key.1,
                                start: key.2,
                                alpha,
                                gamma,
                            };
                            index.insert(key, items.len());
                            if g.is_complete(&item) && !g.rules[item.rule as usize].passive {
                                queue.entry(item.start).or_default().push(items.len());
                            }
                            items.push(item);
                        }
                    }
                }
            }
        }
    }

    // Prediction from every item that was not itself predicted.
    let mut predicted: BTreeMap<u32, f64> = BTreeMap::new();
    for it in &items {
        if it.dot == 0 && it.rule != g.root {
            continue;
        }
        if let Some(Sym::Nt(z)) = g.next_sym(it) {
            for &(y, ln_rl) in &g.left_corner[z as usize] {
                let e = predicted.entry(y).or_insert(f64::NEG_INFINITY);
                *e = ln_add(*e, it.alpha + ln_rl);
            }
        }
    }
    for (y, mass) in predicted {
        for &r in &g.by_lhs[y as usize] {
            let lp = g.rules[r as usize].ln_prob;
            items.push(Item {
                rule: r,
                dot: 0,
                start: pos,
                alpha: mass + lp,
                gamma: lp,
            });
        }
    }

    let mut waiting: HashMap<u32, Vec<u32>> = HashMap::new();
    for (i, it) in items.iter().enumerate() {
        if let Some(Sym::Nt(z)) = g.next_sym(it) {
            waiting.entry(z).or_default().push(i as u32);
        }
    }
    ItemSet {
        items,
        waiting,
        ln_prefix,
    }
}

/// Parser configuration after consuming a prefix. States are persistent:
/// [`ParserState::advance`] returns a new state and leaves `self` intact.
#[derive(Debug, Clone)]
pub struct ParserState {
    grammar: Arc<Compiled>,
    consumed: Vec<String>,
    sets: Vec<Arc<ItemSet>>,
}

impl ParserState {
    /// Compiles `g` and returns the initial state.
    pub fn new(g: &Pcfg) -> Result<Self, ParseError> {
        Ok(Parser::new(g)?.start())
    }

    pub fn consumed(&self) -> &[String] {
        &self.consumed
    }

    fn last(&self) -> &ItemSet {
        self.sets.last().expect("at least the initial set")
    }

    /// Consumes one token. Tokens with zero continuation probability are
    /// rejected.
    pub fn advance(&self, token: &str) -> Result<ParserState, ParseError> {
        let g = &self.grammar;
        let set = self.last();
        let term = g.term_ids.get(token).copied();
        let any_weight = g
            .any
            .as_ref()
            .filter(|a| a.members.contains(token))
            .map(|a| a.ln_weight);

        let mut scanned = Vec::new();
        let mut ln_prefix = f64::NEG_INFINITY;
        for it in &set.items {
            let weight = match g.next_sym(it) {
                Some(Sym::Term(t)) if Some(t) == term => 0.0,
                Some(Sym::Any) => match any_weight {
                    Some(w) => w,
                    None => continue,
                },
                _ => continue,
            };
            let item = Item {
                dot: it.dot + 1,
                alpha: it.alpha + weight,
                gamma: it.gamma + weight,
                ..*it
            };
            ln_prefix = ln_add(ln_prefix, item.alpha);
            scanned.push(item);
        }
        if scanned.is_empty() {
            return Err(ParseError::RejectedToken {
                token: token.to_string(),
                allowed: self.next_dist().support_len(),
            });
        }
        let next = close(g, &self.sets, scanned, ln_prefix);
        let mut sets = self.sets.clone();
        sets.push(Arc::new(next));
        let mut consumed = self.consumed.clone();
        consumed.push(token.to_string());
        Ok(ParserState {
            grammar: Arc::clone(&self.grammar),
            consumed,
            sets,
        })
    }

    /// Natural log of the total probability of complete strings that begin
    /// with the consumed prefix.
    pub fn ln_prefix_probability(&self) -> f64 {
        self.last().ln_prefix
    }

    pub fn prefix_probability(&self) -> f64 {
        self.ln_prefix_probability().exp()
    }

    /// Natural log of the probability of the consumed prefix as a complete
    /// string.
    pub fn ln_string_probability(&self) -> f64 {
        let g = &self.grammar;
        self.last()
            .items
            .iter()
            .find(|it| it.rule == g.root && it.dot == 1)
            .map_or(f64::NEG_INFINITY, |it| it.gamma)
    }

    pub fn string_probability(&self) -> f64 {
        self.ln_string_probability().exp()
    }

    /// Conditional distribution of the next token (or end of string) given
    /// the consumed prefix.
    pub fn next_dist(&self) -> TokenDist {
        let g = &self.grammar;
        let set = self.last();
        let mut term_mass: BTreeMap<u32, f64> = BTreeMap::new();
        let mut any_mass = f64::NEG_INFINITY;
        for it in &set.items {
            match g.next_sym(it) {
                Some(Sym::Term(t)) => {
                    let e = term_mass.entry(t).or_insert(f64::NEG_INFINITY);
                    *e = ln_add(*e, it.alpha);
                }
                Some(Sym::Any) => any_mass = ln_add(any_mass, it.alpha),
                _ => {}
            }
        }
        let norm = set.ln_prefix;
        let mut entries: HashMap<&str, f64> = HashMap::new();
        for (t, m) in term_mass {
            entries.insert(&g.terminals[t as usize], (m - norm).exp());
        }
        if let Some(any) = g.any.as_ref().filter(|_| any_mass > f64::NEG_INFINITY) {
            let each = (any_mass + any.ln_weight - norm).exp();
            for tok in &any.tokens {
                *entries.entry(tok.as_str()).or_default() += each;
            }
        }
        let eos = (self.ln_string_probability() - norm).exp();
        TokenDist::from_probs(
            entries.into_iter().map(|(t, p)| (t.to_string(), p)),
            eos,
            g.domain_size,
        )
    }
}
