//! Command-line front end for the embedding pipeline.

pub mod commands;
pub mod config;

use anyhow::Result;
use clap::{Parser, Subcommand};

pub use config::{parse_config, Flags, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "dolores", version, about = "Contextual knowledge-graph embeddings", args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    /// Validate the splits and write the vocabularies
    Ingest,
    /// Sample the walk corpus
    Walk,
    /// Train the language model on the corpus
    Train,
    /// Write entity and relation vectors from a checkpoint
    Export,
    /// Train a scorer and report filtered ranking metrics
    EvalLink,
    /// Train a scorer and report triple classification accuracy
    EvalTriple,
    /// Check analytic gradients against finite differences
    GradCheck,
}

pub fn dispatch(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Ingest => commands::ingest(cfg),
        Command::Walk => commands::walk(cfg),
        Command::Train => commands::train(cfg),
        Command::Export => commands::export(cfg),
        Command::EvalLink => commands::eval_link(cfg),
        Command::EvalTriple => commands::eval_triple(cfg),
        Command::GradCheck => commands::grad_check(),
    }
}
