//! Command-line pipeline: corpus generation, annotation, dataset building,
//! training, and evaluation behind one binary.
//!
//! Every command funnels its randomness through a single seed, stages all
//! output bytes before the first rename, and finishes by writing one run
//! manifest into its output directory. Reruns with the same inputs and seed
//! reproduce every artifact byte for byte; only the manifest's wall-clock
//! duration differs.

pub mod args;
pub mod commands;
pub mod configs;
pub mod data;
pub mod error;
pub mod manifest;

pub use args::{Cli, Command};
pub use error::CliError;
pub use manifest::{RunManifest, MANIFEST_FILE};

pub type Result<T> = std::result::Result<T, CliError>;

/// Runs one parsed command to completion.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus(args) => commands::gen_corpus::run(&args),
        Command::Annotate(args) => commands::annotate::run(&args),
        Command::Build(args) => commands::build::run(&args),
        Command::Train(args) => commands::train::run(&args),
        Command::Eval(args) => commands::eval::run(&args),
        Command::Stats(args) => commands::stats::run(&args),
    }
}
