//! `stimgen`: LM generation, corpus canonicalization and stimulus curation.
//!
//! Exit codes: 0 success (data-level warnings included), 1 usage error,
//! 2 I/O error, 3 invalid input.

mod cmd;
mod config;
mod error;
mod io;

use clap::{Parser, Subcommand};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "stimgen", version, about)]
struct Cli {
    /// Log level: error, warn, info, debug
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an add-k smoothed n-gram model from a text corpus
    TrainLm(cmd::train_lm::TrainLmArgs),
    /// Generate unique grammar-constrained sentences per verb sense
    Generate(cmd::generate::GenerateArgs),
    /// Filter annotated corpus sentences and rewrite them as "The N V the N."
    Canon(cmd::canon::CanonArgs),
    /// Calibration selection, survey lists and sentence pairs from ratings
    Curate(cmd::curate::CurateArgs),
    /// Monosemy classification, prompt selection and gloss inventories
    Senses(cmd::senses::SensesArgs),
    /// Compare constrained sampling with rejection sampling by enumeration
    Divergence(cmd::divergence::DivergenceArgs),
    /// List the strings of a grammar with their probabilities
    Enumerate(cmd::enumerate::EnumerateArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::TrainLm(a) => cmd::train_lm::run(a),
        Command::Generate(a) => cmd::generate::run(a),
        Command::Canon(a) => cmd::canon::run(a),
        Command::Curate(a) => cmd::curate::run(a),
        Command::Senses(a) => cmd::senses::run(a),
        Command::Divergence(a) => cmd::divergence::run(a),
        Command::Enumerate(a) => cmd::enumerate::run(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(CliError::exit_code(&e));
    }
}
