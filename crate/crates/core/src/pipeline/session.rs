use serde::{Deserialize, Serialize};

use super::models::ModelSet;
use crate::ar_prior::sample_sequence;
use crate::distribution_grid::{reorder, sample_cellwise, DistributionGrid, OrderPermutation, EPSILON};
use crate::voxel_shapes::TsdfGrid;
use crate::vq_codec::{decode, IndexGrid};
use crate::{Error, Result};

/// Upper bound on phrase length in bytes.
pub const MAX_PHRASE_BYTES: usize = 1024;

/// Switches that remove one stage of the generator each.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    /// Combine the previous distribution with a phrase-only prediction by
    /// product instead of feeding it through the predictor.
    pub no_condition: bool,
    /// Sample cells independently instead of through the prior.
    pub no_transformer: bool,
    /// Sample in raster order instead of by decreasing change.
    pub no_reorder: bool,
}

/// Samples drawn for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSamples {
    pub perm: OrderPermutation,
    pub grids: Vec<IndexGrid>,
    pub shapes: Vec<TsdfGrid>,
}

/// One recursive generation session.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionState {
    pub seed: u64,
    pub flags: AblationFlags,
    phrases: Vec<String>,
    z_history: Vec<DistributionGrid>,
}

pub fn validate_phrase(phrase: &str) -> Result<()> {
    if phrase.trim().is_empty() {
        return Err(Error::Validation("phrase is empty".into()));
    }
    if phrase.len() > MAX_PHRASE_BYTES {
        return Err(Error::Validation(format!(
            "phrase has {} bytes, limit is {MAX_PHRASE_BYTES}",
            phrase.len()
        )));
    }
    Ok(())
}

/// Z_t from Z_{t−1} and a phrase.
pub fn next_distribution(
    models: &ModelSet,
    z_prev: &DistributionGrid,
    phrase: &str,
    flags: AblationFlags,
) -> Result<DistributionGrid> {
    let c = models.cond.project(&models.cond.embed(phrase))?;
    if !flags.no_condition {
        return models.cond.predict(z_prev, &c);
    }
    let phrase_only = models.cond.predict(&DistributionGrid::uniform(z_prev.g(), z_prev.k()), &c)?;
    let product = z_prev
        .probs()
        .iter()
        .zip(phrase_only.probs())
        .map(|(a, b)| a.max(EPSILON) * b.max(EPSILON))
        .collect();
    DistributionGrid::from_weights(z_prev.g(), z_prev.k(), product)
}

/// Draws `n` index grids from Z_t (sample i uses seed ⊕ i) and decodes them.
pub fn sample_step(
    models: &ModelSet,
    z_t: &DistributionGrid,
    z_prev: &DistributionGrid,
    seed: u64,
    n: usize,
    flags: AblationFlags,
) -> Result<StepSamples> {
    let perm = if flags.no_reorder {
        OrderPermutation::identity(z_t.cells())
    } else {
        reorder(z_t, z_prev)?
    };
    let mut grids = Vec::with_capacity(n);
    let mut shapes = Vec::with_capacity(n);
    for i in 0..n {
        let s = seed ^ i as u64;
        let q = if flags.no_transformer {
            sample_cellwise(z_t, s)
        } else {
            sample_sequence(&models.prior, z_t, &perm, s)?
        };
        shapes.push(decode(&q, &models.codebook)?);
        grids.push(q);
    }
    Ok(StepSamples { perm, grids, shapes })
}

impl SessionState {
    pub fn new(models: &ModelSet, seed: u64, flags: AblationFlags) -> Self {
        Self {
            seed,
            flags,
            phrases: Vec::new(),
            z_history: vec![DistributionGrid::uniform(models.g(), models.k())],
        }
    }

    /// Rebuilds a state by applying `phrases` in order.
    pub fn replay(models: &ModelSet, seed: u64, flags: AblationFlags, phrases: &[String]) -> Result<Self> {
        let mut s = Self::new(models, seed, flags);
        for p in phrases {
            s.advance(models, p)?;
        }
        Ok(s)
    }

    pub fn t(&self) -> usize {
        self.phrases.len()
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    pub fn z_history(&self) -> &[DistributionGrid] {
        &self.z_history
    }

    pub fn current(&self) -> &DistributionGrid {
        self.z_history.last().expect("history holds Z_0")
    }

    /// Z_{t−1}, or Z_0 at t = 0.
    pub fn previous(&self) -> &DistributionGrid {
        &self.z_history[self.z_history.len().saturating_sub(2)]
    }

    /// Adds a phrase without sampling.
    pub fn advance(&mut self, models: &ModelSet, phrase: &str) -> Result<()> {
        validate_phrase(phrase)?;
        let z = next_distribution(models, self.current(), phrase, self.flags)?;
        self.phrases.push(phrase.to_string());
        self.z_history.push(z);
        Ok(())
    }

    /// Adds a phrase and samples `n` shapes from the new distribution.
    pub fn step(&self, models: &ModelSet, phrase: &str, n: usize) -> Result<(SessionState, StepSamples)> {
        let mut next = self.clone();
        next.advance(models, phrase)?;
        let samples = next.samples(models, next.seed, n)?;
        Ok((next, samples))
    }

    /// Samples of the current step under the given seed; state is unchanged.
    pub fn samples(&self, models: &ModelSet, seed: u64, n: usize) -> Result<StepSamples> {
        sample_step(models, self.current(), self.previous(), seed, n, self.flags)
    }

    /// Removes the last phrase; at t = 0 the state is returned unchanged.
    pub fn undo(&self) -> SessionState {
        let mut s = self.clone();
        if s.phrases.pop().is_some() {
            s.z_history.pop();
        } else {
            log::warn!("undo at t = 0 ignored");
        }
        s
    }
}
