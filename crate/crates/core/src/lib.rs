//! Recursive text-conditioned voxel shape generation.
//!
//! Shapes are truncated signed distance fields on a voxel lattice. A patch
//! codebook turns each shape into a small grid of code indices, text phrases
//! refine a per-cell categorical distribution over those codes one phrase at a
//! time, and shapes are drawn from that distribution by an autoregressive
//! product-of-experts sampler that visits cells in order of how much the last
//! phrase changed them.
//!
//! The crate is split along the data flow:
//!
//! * [`voxel_shapes`] procedural furniture corpus, T-SDF grids, metrics, mesh export
//! * [`vq_codec`] patch codebook training, encode and decode
//! * [`text_phrases`] captions to phrase sequences to many-to-many shape sets
//! * [`distribution_grid`] per-cell code distributions and their metrics
//! * [`conditional_model`] text embedding, projection and residual predictor
//! * [`ar_prior`] context-model prior and the product sampler
//! * [`pipeline`] recursive generation sessions, training drivers, evaluation

pub mod ar_prior;
pub mod conditional_model;
pub mod distribution_grid;
mod encoding;
mod error;
pub mod pipeline;
pub mod text_phrases;
pub mod voxel_shapes;
pub mod vq_codec;

pub use encoding::{decode_f32s, decode_f64s, encode_f32s, encode_f64s, stable_hash};
pub use error::{Error, Result};
