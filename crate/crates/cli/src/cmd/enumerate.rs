use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use stimgen::grammar::{language_enumerate_capped, parse_grammar};
use stimgen::lm::LanguageModel;

use crate::error::{CliError, Result};
use crate::io::{load_model, read_text};

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    /// Grammar file
    #[arg(long)]
    grammar: PathBuf,
    /// Model whose vocabulary fills wildcards
    #[arg(long, conflicts_with = "tokens")]
    model: Option<PathBuf>,
    /// Comma-separated wildcard vocabulary
    #[arg(long, value_delimiter = ',')]
    tokens: Option<Vec<String>>,
    /// Longest string to list
    #[arg(long, default_value_t = 8)]
    max_len: usize,
    /// Expansion step budget
    #[arg(long, default_value_t = 1_000_000)]
    cap: usize,
}

/// Prints `probability<TAB>string` for every string up to `max_len`,
/// most probable first.
pub fn run(args: EnumerateArgs) -> Result<()> {
    let mut g = parse_grammar(&read_text(&args.grammar)?)
        .map_err(|e| CliError::invalid(&args.grammar, e))?;
    if g.has_wildcards() {
        let vocab = match (&args.model, &args.tokens) {
            (Some(p), _) => load_model(p)?.vocab().content_tokens(),
            (None, Some(t)) => t.clone(),
            (None, None) => {
                return Err(CliError::Usage(
                    "grammar has wildcards; pass --model or --tokens".into(),
                ))
            }
        };
        g = g
            .desugar_wildcards(&vocab)
            .map_err(|e| CliError::invalid(&args.grammar, e))?;
    }
    let mut strings = language_enumerate_capped(&g, args.max_len, args.cap)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    strings.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (s, p) in strings {
        writeln!(out, "{p:.12}\t{}", s.join(" "))
            .map_err(|e| CliError::io("stdout".as_ref(), e))?;
    }
    Ok(())
}
