//! Text embedding, the per-cell projection and the residual predictor that
//! refines a distribution grid given a phrase.

mod embed;
mod model;
mod train;

pub use embed::{TextEmbedder, DEFAULT_EMBED_DIM, DEFAULT_HASH_SEED};
pub use model::{
    group_names, neighbor_means, ConditionalModel, Gradient, ModelConfig, Projector, ResidualPredictor, SKIP_FLOOR,
};
pub use train::{grad_check, grad_check_with, loss, train, ChainSource, GradCheck, Optimizer, TrainChain, TrainConfig, TrainPair, TrainReport};
