//! Next-token distributions over a vocabulary extended with end-of-sequence.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tolerance used when deciding whether a distribution is normalized.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// One outcome of a next-token draw.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Next {
    Token(String),
    Eos,
}

impl Next {
    pub fn token(&self) -> Option<&str> {
        match self {
            Next::Token(t) => Some(t),
            Next::Eos => None,
        }
    }
}

/// Probabilities for each token plus end-of-sequence. Only outcomes with
/// positive weight are stored; iteration order is lexicographic by token
/// with end-of-sequence last, which keeps seeded sampling reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDist {
    entries: BTreeMap<String, f64>,
    eos: f64,
    domain_size: usize,
    normalized: bool,
}

impl TokenDist {
    /// Wraps weights as given. The result is flagged normalized when the
    /// weights sum to one within [`NORM_TOLERANCE`].
    pub fn from_probs(
        entries: impl IntoIterator<Item = (String, f64)>,
        eos: f64,
        domain_size: usize,
    ) -> Self {
        let entries: BTreeMap<String, f64> =
            entries.into_iter().filter(|(_, p)| *p > 0.0).collect();
        let eos = eos.max(0.0);
        let total = entries.values().sum::<f64>() + eos;
        TokenDist {
            entries,
            eos,
            domain_size,
            normalized: (total - 1.0).abs() <= NORM_TOLERANCE,
        }
    }

    /// Normalizes non-negative weights. Returns `None` when the total mass
    /// is zero.
    pub fn from_weights(
        entries: impl IntoIterator<Item = (String, f64)>,
        eos: f64,
        domain_size: usize,
    ) -> Option<Self> {
        let mut d = Self::from_probs(entries, eos, domain_size);
        d.renormalize().then_some(d)
    }

    pub fn from_outcomes(
        outcomes: impl IntoIterator<Item = (Next, f64)>,
        domain_size: usize,
    ) -> Option<Self> {
        let mut eos = 0.0;
        let mut entries = Vec::new();
        for (o, p) in outcomes {
            match o {
                Next::Token(t) => entries.push((t, p)),
                Next::Eos => eos += p,
            }
        }
        Self::from_weights(entries, eos, domain_size)
    }

    /// Rescales to total mass one. Returns false if the mass is zero.
    pub fn renormalize(&mut self) -> bool {
        let total = self.total();
        if !(total > 0.0) || !total.is_finite() {
            return false;
        }
        for p in self.entries.values_mut() {
            *p /= total;
        }
        self.eos /= total;
        self.normalized = true;
        true
    }

    pub fn prob(&self, token: &str) -> f64 {
        self.entries.get(token).copied().unwrap_or(0.0)
    }

    pub fn outcome_prob(&self, outcome: &Next) -> f64 {
        match outcome {
            Next::Token(t) => self.prob(t),
            Next::Eos => self.eos,
        }
    }

    pub fn eos_prob(&self) -> f64 {
        self.eos
    }

    pub fn entries(&self) -> &BTreeMap<String, f64> {
        &self.entries
    }

    /// Size of the token domain the distribution is defined over (excluding
    /// end-of-sequence).
    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum::<f64>() + self.eos
    }

    /// Number of outcomes with positive probability.
    pub fn support_len(&self) -> usize {
        self.entries.len() + usize::from(self.eos > 0.0)
    }

    pub fn outcomes(&self) -> impl Iterator<Item = (Next, f64)> + '_ {
        self.entries
            .iter()
            .map(|(t, p)| (Next::Token(t.clone()), *p))
            .chain((self.eos > 0.0).then_some((Next::Eos, self.eos)))
    }

    /// The single outcome carrying all mass, if there is one.
    pub fn point_mass(&self) -> Option<Next> {
        if self.support_len() != 1 {
            return None;
        }
        self.outcomes().next().map(|(o, _)| o)
    }

    /// Draws one outcome. Panics on an empty distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Next {
        let total = self.total();
        assert!(total > 0.0, "sampling from an empty distribution");
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut last = None;
        for (o, p) in self.outcomes() {
            acc += p;
            if u < acc {
                return o;
            }
            last = Some(o);
        }
        last.expect("non-empty support")
    }
}
