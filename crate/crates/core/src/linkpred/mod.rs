//! Link prediction: an R-GCN encoder with a DistMult decoder.

pub mod metrics;
pub mod model;
pub mod objective;
pub mod rgcn;
pub mod train;

pub use metrics::{rank_metrics, RankMetrics};
pub use model::{Activation, Architecture, ModelParams, RgcnLayer};
pub use objective::{distmult_score, log_sigmoid, objective_and_grad, objective_value, sigmoid, Sample};
pub use rgcn::{rgcn_forward, EdgeMask, MessageGraph};
pub use train::{train, train_with_report, TrainConfig, TrainReport};
