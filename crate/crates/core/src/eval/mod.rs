//! Downstream scorers and the link prediction and triple classification
//! protocols used to compare initializations.

pub mod breakdown;
pub mod classify;
pub mod fit;
pub mod ranking;
pub mod report;
pub mod scorer;

pub use breakdown::{category_of, rank_breakdown_by_category, CategoryRank};
pub use classify::{best_threshold, label_pairs, triple_classification_eval, ClassificationReport, Thresholds};
pub use fit::{corrupt, generate_negatives, random_init_std, train_scorer, InitMode, ScorerInit, ScorerLoss, ScorerModel, ScorerTrainConfig};
pub use ranking::{filtered_rank, hits_at, link_prediction_eval, Metrics, RankingResult};
pub use scorer::{score_vectors, Scorer, ScorerKind};
