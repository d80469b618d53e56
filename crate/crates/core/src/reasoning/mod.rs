//! Document-level reasoning paths and their per-relation scorers.

pub mod features;
pub mod paths;
pub mod scorer;

pub use features::FeatureSpace;
pub use paths::{extract_paths, PathKind, ReasoningPath};
pub use scorer::{
    fit_scorer, label_relations, pair_examples, scorer_loss, train_scorer, PairExample, PairReasoning,
    ReasoningScorer, ScorerConfig,
};
