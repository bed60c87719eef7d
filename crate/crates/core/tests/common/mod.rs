//! Shared fixtures for integration tests: random grammars and a
//! brute-force prefix-probability table built from exhaustive enumeration.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use rand::Rng;
use stimgen::grammar::{language_enumerate_capped, Pcfg, Rule, Symbol};
use stimgen::{Next, ParserState};

pub const TERMINALS: [&str; 3] = ["a", "b", "c"];
pub const ENUM_LEN: usize = 12;

pub struct RandomGrammar {
    pub grammar: Pcfg,
    pub finite: bool,
    pub left_recursive: bool,
    pub language: Vec<(Vec<String>, f64)>,
}

fn nt(i: usize) -> String {
    format!("N{i}")
}

/// Draws epsilon-free grammars with at most 4 nonterminals and 3
/// terminals until one is valid, consistent, and enumerable with
/// negligible mass beyond `ENUM_LEN` tokens.
pub fn random_grammar<R: Rng>(rng: &mut R, left_recursive: bool) -> RandomGrammar {
    loop {
        if let Some(g) = try_random_grammar(rng, left_recursive) {
            return g;
        }
    }
}

fn try_random_grammar<R: Rng>(rng: &mut R, left_recursive: bool) -> Option<RandomGrammar> {
    let n_nt = if rng.gen_bool(0.1) {
        1
    } else {
        rng.gen_range(2..=4)
    };
    let n_t = if rng.gen_bool(0.1) {
        1
    } else {
        rng.gen_range(2..=3)
    };
    let term = |rng: &mut R| Symbol::Terminal(TERMINALS[rng.gen_range(0..n_t)].to_string());
    let mut rules = Vec::new();
    for i in 0..n_nt {
        let mut bodies: Vec<(Vec<Symbol>, f64)> = Vec::new();
        // A terminal-only alternative keeps every nonterminal productive.
        let len = rng.gen_range(1..=2);
        bodies.push((
            (0..len).map(|_| term(rng)).collect(),
            rng.gen_range(2.0..4.0),
        ));
        if i == 0 && left_recursive {
            let mut rhs = vec![Symbol::Nonterminal(nt(0))];
            rhs.push(term(rng));
            bodies.push((rhs, rng.gen_range(0.3..1.0)));
        }
        if i + 1 < n_nt {
            // Chain each nonterminal to the next so all are reachable.
            let mut rhs = vec![term(rng), Symbol::Nonterminal(nt(i + 1))];
            if rng.gen_bool(0.5) {
                rhs.reverse();
            }
            if rng.gen_bool(0.3) {
                rhs.truncate(1);
                rhs[0] = Symbol::Nonterminal(nt(i + 1));
            }
            bodies.push((rhs, rng.gen_range(0.5..2.0)));
        }
        for _ in 0..rng.gen_range(0..=2) {
            let len = rng.gen_range(1..=3);
            let rhs: Vec<Symbol> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.55) {
                        term(rng)
                    } else {
                        Symbol::Nonterminal(nt(rng.gen_range(0..n_nt)))
                    }
                })
                .collect();
            if !bodies.iter().any(|(b, _)| *b == rhs) {
                bodies.push((rhs, rng.gen_range(0.2..1.5)));
            }
        }
        let total: f64 = bodies.iter().map(|(_, w)| w).sum();
        for (rhs, w) in bodies {
            rules.push(Rule::new(nt(i), rhs, w / total));
        }
    }
    let grammar = Pcfg::new(nt(0), rules, 0.1).ok()?;
    ParserState::new(&grammar).ok()?;
    let language = language_enumerate_capped(&grammar, ENUM_LEN, 400_000).ok()?;
    let mass: f64 = language.iter().map(|(_, p)| p).sum();
    let finite = !has_cycle(&grammar);
    if finite {
        assert!(
            (mass - 1.0).abs() < 1e-9,
            "finite language must sum to 1, got {mass}"
        );
    } else if mass < 1.0 - 1e-7 {
        return None;
    }
    let left_recursive = grammar
        .rules()
        .iter()
        .any(|r| r.rhs[0] == Symbol::Nonterminal(r.lhs.clone()));
    Some(RandomGrammar {
        grammar,
        finite,
        left_recursive,
        language,
    })
}

fn has_cycle(g: &Pcfg) -> bool {
    let nts = g.nonterminals();
    let edges: HashMap<&str, Vec<&str>> = nts
        .iter()
        .map(|n| {
            let out = g
                .rules_for(n)
                .flat_map(|r| r.rhs.iter())
                .filter_map(|s| match s {
                    Symbol::Nonterminal(m) => Some(m.as_str()),
                    _ => None,
                })
                .collect();
            (*n, out)
        })
        .collect();
    fn visit<'a>(
        n: &'a str,
        edges: &HashMap<&'a str, Vec<&'a str>>,
        on_stack: &mut HashSet<&'a str>,
        done: &mut HashSet<&'a str>,
    ) -> bool {
        if on_stack.contains(n) {
            return true;
        }
        if !done.insert(n) {
            return false;
        }
        on_stack.insert(n);
        let cyc = edges[n].iter().any(|m| visit(m, edges, on_stack, done));
        on_stack.remove(n);
        cyc
    }
    let mut done = HashSet::new();
    nts.iter()
        .any(|n| visit(n, &edges, &mut HashSet::new(), &mut done))
}

/// Prefix and complete-string masses computed by summing enumerated strings.
pub struct Oracle {
    prefix: HashMap<Vec<String>, f64>,
    complete: HashMap<Vec<String>, f64>,
}

impl Oracle {
    pub fn new(language: &[(Vec<String>, f64)], max_prefix: usize) -> Self {
        let mut prefix: HashMap<Vec<String>, f64> = HashMap::new();
        let mut complete = HashMap::new();
        for (s, p) in language {
            complete.insert(s.clone(), *p);
            for k in 0..=s.len().min(max_prefix) {
                *prefix.entry(s[..k].to_vec()).or_default() += p;
            }
        }
        Oracle { prefix, complete }
    }

    pub fn prefix(&self, p: &[String]) -> f64 {
        self.prefix.get(p).copied().unwrap_or(0.0)
    }

    pub fn complete(&self, s: &[String]) -> f64 {
        self.complete.get(s).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Default)]
pub struct OracleStats {
    pub prefixes_checked: usize,
    pub max_error: f64,
}

/// Walks every prefix of length <= `max_prefix` with positive mass and
/// compares the parser against the oracle. Returns the first discrepancy.
pub fn check_against_oracle(rg: &RandomGrammar, max_prefix: usize) -> Result<OracleStats, String> {
    let oracle = Oracle::new(&rg.language, max_prefix + 1);
    let tol = if rg.finite { 1e-9 } else { 1e-6 };
    let mut stats = OracleStats::default();
    let mut stack = vec![ParserState::new(&rg.grammar).map_err(|e| e.to_string())?];
    while let Some(state) = stack.pop() {
        let prefix = state.consumed().to_vec();
        stats.prefixes_checked += 1;
        let mut check = |what: &str, got: f64, want: f64| -> Result<(), String> {
            let err = (got - want).abs();
            stats.max_error = stats.max_error.max(err);
            if err > tol {
                return Err(format!(
                    "{what} mismatch for prefix {:?}: parser {got}, oracle {want}\n{}",
                    prefix,
                    rg.grammar.render()
                ));
            }
            Ok(())
        };
        let pp = state.prefix_probability();
        check("prefix probability", pp, oracle.prefix(&prefix))?;
        check(
            "string probability",
            state.string_probability(),
            oracle.complete(&prefix),
        )?;
        let dist = state.next_dist();
        let total = dist.total();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("next_dist sums to {total} for {prefix:?}"));
        }
        for t in TERMINALS {
            let mut ext = prefix.clone();
            ext.push(t.to_string());
            let want = oracle.prefix(&ext);
            if rg.finite {
                check(
                    &format!("next({t})"),
                    dist.prob(t),
                    want / oracle.prefix(&prefix),
                )?;
            } else {
                check(&format!("next({t}) mass"), dist.prob(t) * pp, want)?;
            }
            if dist.prob(t) > 0.0 && prefix.len() < max_prefix {
                stack.push(state.advance(t).map_err(|e| e.to_string())?);
            } else if dist.prob(t) == 0.0 && state.advance(t).is_ok() {
                return Err(format!("advance accepted zero-probability token {t}"));
            }
        }
        if rg.finite {
            check(
                "eos",
                dist.eos_prob(),
                oracle.complete(&prefix) / oracle.prefix(&prefix),
            )?;
        } else {
            check("eos mass", dist.eos_prob() * pp, oracle.complete(&prefix))?;
        }
        // Telescoping: the product of conditional masses along the path.
        if oracle.complete(&prefix) > 0.0 {
            let mut st = ParserState::new(&rg.grammar).unwrap();
            let mut prod = 1.0;
            for w in &prefix {
                prod *= st.next_dist().outcome_prob(&Next::Token(w.clone()));
                st = st.advance(w).unwrap();
            }
            prod *= st.next_dist().eos_prob();
            let sp = state.string_probability();
            if (prod - sp).abs() > 1e-9 {
                return Err(format!(
                    "telescoping product {prod} != string probability {sp}"
                ));
            }
        }
    }
    Ok(stats)
}
