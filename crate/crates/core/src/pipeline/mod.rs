//! Recursive generation sessions, training drivers and evaluation tables.

mod evaluate;
mod models;
mod session;
mod training;

pub use evaluate::*;
pub use models::{ModelSet, CODEBOOK_FILE, COND_MODEL_FILE, PRIOR_FILE};
pub use session::{next_distribution, sample_step, validate_phrase, AblationFlags, SessionState, StepSamples, MAX_PHRASE_BYTES};
pub use training::*;
