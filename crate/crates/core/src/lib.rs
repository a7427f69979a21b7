//! Training and evaluation engine for implicit-feedback recommenders with
//! pairwise (BPR), sampled-softmax (SSM) and SimCE ranking losses over a
//! matrix-factorization or LightGCN backbone.

pub mod adjacency;
pub mod backbone;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod io;
pub mod loss;
pub mod matrix;
pub mod optim;
pub mod sampler;
pub mod seed;
pub mod synthetic;
pub mod trainer;

pub use backbone::{propagate, EmbeddingState, PropagatedEmbeddings};
pub use dataset::{InteractionDataset, Split, SplitFractions};
pub use error::{Error, Result};
pub use evaluator::{evaluate, MetricMap};
pub use loss::{Loss, LossGrad, LossKind};
pub use trainer::{train, MetricsReport, TrainConfig, TrainOutcome};
