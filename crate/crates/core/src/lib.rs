//! Deep contextualized knowledge-graph embeddings.
//!
//! The pipeline walks a knowledge graph into entity-relation chains, trains
//! a multi-layer bidirectional LSTM language model over `(entity, relation)`
//! pair tokens, extracts per-layer contextual states, and evaluates the
//! resulting vectors as initializations for link-prediction and triple
//! classification scorers.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix the
//! precision for the common cases.

pub mod embed;
pub mod error;
pub mod eval;
pub mod kg;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod walk;

pub use error::{Error, Result};
pub use scalar::{Precision, Scalar};

pub type ModelParamsF32 = model::ModelParams<f32>;
pub type ModelParamsF64 = model::ModelParams<f64>;
pub type CheckpointF32 = model::Checkpoint<f32>;
pub type CheckpointF64 = model::Checkpoint<f64>;
pub type LayerStatesF32 = model::LayerStates<f32>;
pub type LayerStatesF64 = model::LayerStates<f64>;
pub type StaticTableF32 = embed::StaticEmbeddingTable<f32>;
pub type StaticTableF64 = embed::StaticEmbeddingTable<f64>;
pub type ScorerF32 = eval::Scorer<f32>;
pub type ScorerF64 = eval::Scorer<f64>;
