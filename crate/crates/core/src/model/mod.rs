//! The bidirectional LSTM language model and its training machinery.

pub mod adam;
pub mod bilm;
pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod lstm;
pub mod params;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use bilm::{bilm_backward, bilm_forward, encode, tokenize_chain, LayerStates, Mode, PairToken};
pub use checkpoint::Checkpoint;
pub use config::ModelConfig;
pub use params::{LstmLayer, ModelParams};
pub use train::{chains_to_sequences, train, train_with, EpochSummary, TrainOutcome};
