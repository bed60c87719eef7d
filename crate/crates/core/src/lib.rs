//! Grammar-constrained sentence generation for lexical-semantic stimuli.
//!
//! A probabilistic context-free grammar supplies hard syntactic constraints
//! and an incremental Earley parser turns it into a next-token constraint
//! distribution. Multiplying that distribution with any next-token language
//! model and renormalizing gives a locally constrained sampler. Around this
//! core sit the corpus canonicalizer, the sense-elicitation pipeline, and
//! the experiment-materials algorithms (z-scoring, calibration selection,
//! list assembly, and sentence pairing).

pub mod canon;
pub mod dist;
pub mod earley;
pub mod grammar;
pub mod lm;
pub mod rng;
pub mod sampler;
pub mod sense;
pub mod stimulus;

pub use dist::{Next, TokenDist};
pub use earley::{ParseError, Parser, ParserState};
pub use grammar::{language_enumerate, parse_grammar, GrammarError, Pcfg, Rule, Symbol};
