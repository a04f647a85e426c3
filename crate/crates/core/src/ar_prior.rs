//! Order-m context model prior over index sequences, combined with a
//! distribution grid as a product of experts.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution_grid::{draw_index, DistributionGrid, OrderPermutation, EPSILON};
use crate::vq_codec::IndexGrid;
use crate::{Error, Result};

pub const DEFAULT_ORDER: usize = 2;
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Largest outcome space [`exhaustive_joint`] will enumerate.
pub const MAX_JOINT_OUTCOMES: usize = 1_000_000;

/// How the prior and a distribution-grid row are combined per cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combination {
    /// p_θ(k | context) · z_k.
    #[default]
    Product,
    /// p_θ(k | context) / p_θ(k) · z_k. The context-free marginal p_θ(k) is
    /// divided out so that code frequencies already carried by z are not
    /// counted twice.
    Calibrated,
}

#[derive(Clone, Debug, PartialEq)]
struct ContextCounts {
    counts: Vec<u64>,
    total: u64,
}

/// Add-α smoothed next-index counts for every context of length 0..=m.
/// Contexts are oldest-first. A context never seen in training backs off by
/// dropping its oldest element.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovPrior {
    order: usize,
    alpha: f64,
    k: usize,
    combination: Combination,
    tables: BTreeMap<Vec<u16>, ContextCounts>,
}

#[derive(Serialize, Deserialize)]
struct PriorFile {
    m: usize,
    alpha: f64,
    k: usize,
    #[serde(default)]
    combination: Combination,
    contexts: Vec<ContextRecord>,
}

#[derive(Serialize, Deserialize)]
struct ContextRecord {
    context: Vec<u16>,
    /// (next index, count) pairs with non-zero count, ascending index.
    counts: Vec<(u16, u64)>,
}

impl MarkovPrior {
    /// An untrained prior; every conditional is uniform.
    pub fn empty(order: usize, alpha: f64, k: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("smoothing alpha {alpha} must be positive")));
        }
        if k == 0 {
            return Err(Error::Config("K must be positive".into()));
        }
        Ok(Self {
            order,
            alpha,
            k,
            combination: Combination::Product,
            tables: BTreeMap::new(),
        })
    }

    pub fn with_combination(mut self, combination: Combination) -> Self {
        self.combination = combination;
        self
    }

    pub fn combination(&self) -> Combination {
        self.combination
    }

    /// Counts every (context, next) pair along each grid in raster order.
    pub fn fit(grids: &[IndexGrid], order: usize, alpha: f64, k: usize) -> Result<Self> {
        let mut prior = Self::empty(order, alpha, k)?;
        for q in grids {
            prior.observe(q.indices())?;
        }
        Ok(prior)
    }

    /// Adds one sequence to the counts.
    pub fn observe(&mut self, sequence: &[u16]) -> Result<()> {
        for (i, &next) in sequence.iter().enumerate() {
            if next as usize >= self.k {
                return Err(Error::Dimension(format!("index {next} out of range for K={}", self.k)));
            }
            let start = i.saturating_sub(self.order);
            let entry = self
                .tables
                .entry(sequence[start..i].to_vec())
                .or_insert_with(|| ContextCounts {
                    counts: vec![0; self.k],
                    total: 0,
                });
            entry.counts[next as usize] += 1;
            entry.total += 1;
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Sum of all counts; equals the number of observed cells.
    pub fn total_count(&self) -> u64 {
        self.tables.values().map(|c| c.total).sum()
    }

    pub fn context_count(&self) -> usize {
        self.tables.len()
    }

    /// p(next | context) for every next index. Uses at most the last m
    /// elements of `context`.
    pub fn distribution(&self, context: &[u16]) -> Vec<f64> {
        let start = context.len().saturating_sub(self.order);
        let mut ctx = &context[start..];
        loop {
            if let Some(c) = self.tables.get(ctx) {
                let denom = c.total as f64 + self.k as f64 * self.alpha;
                return c.counts.iter().map(|&n| (n as f64 + self.alpha) / denom).collect();
            }
            if ctx.is_empty() {
                return vec![1.0 / self.k as f64; self.k];
            }
            ctx = &ctx[1..];
        }
    }

    /// Natural-log likelihood of a grid read in raster order.
    pub fn log_likelihood(&self, q: &IndexGrid) -> f64 {
        let seq = q.indices();
        (0..seq.len())
            .map(|i| {
                let start = i.saturating_sub(self.order);
                self.distribution(&seq[start..i])[seq[i] as usize].ln()
            })
            .sum()
    }

    /// exp of the mean negative log-likelihood per cell.
    pub fn perplexity(&self, grids: &[IndexGrid]) -> f64 {
        let cells: usize = grids.iter().map(IndexGrid::len).sum();
        let ll: f64 = grids.iter().map(|q| self.log_likelihood(q)).sum();
        (-ll / cells as f64).exp()
    }

    pub fn to_json(&self) -> Result<String> {
        let contexts = self
            .tables
            .iter()
            .map(|(ctx, c)| ContextRecord {
                context: ctx.clone(),
                counts: c
                    .counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &n)| n > 0)
                    .map(|(k, &n)| (k as u16, n))
                    .collect(),
            })
            .collect();
        let file = PriorFile {
            m: self.order,
            alpha: self.alpha,
            k: self.k,
            combination: self.combination,
            contexts,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PriorFile = serde_json::from_str(text)?;
        let mut prior = Self::empty(file.m, file.alpha, file.k)?.with_combination(file.combination);
        for rec in file.contexts {
            if rec.context.len() > file.m {
                return Err(Error::Format(format!("context longer than order {}", file.m)));
            }
            let mut counts = vec![0; file.k];
            for (k, n) in rec.counts {
                *counts
                    .get_mut(k as usize)
                    .ok_or_else(|| Error::Format(format!("index {k} out of range")))? += n;
            }
            let total = counts.iter().sum();
            prior.tables.insert(rec.context, ContextCounts { counts, total });
        }
        Ok(prior)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// p_θ(k | context) · max(z_k, ε), renormalized.
pub fn cond_prob(prior: &MarkovPrior, context: &[u16], z_row: &[f64]) -> Result<Vec<f64>> {
    weighted(&prior.distribution(context), z_row)
}

/// p_θ(k | context) / p_θ(k) · max(z_k, ε), renormalized.
pub fn calibrated_prob(prior: &MarkovPrior, context: &[u16], z_row: &[f64]) -> Result<Vec<f64>> {
    let marginal = prior.distribution(&[]);
    let lifted: Vec<f64> = prior
        .distribution(context)
        .iter()
        .zip(&marginal)
        .map(|(p, m)| p / m)
        .collect();
    let s: f64 = lifted.iter().sum();
    let as_prior: Vec<f64> = lifted.iter().map(|x| x / s).collect();
    weighted(&as_prior, z_row)
}

fn weighted(factor: &[f64], z_row: &[f64]) -> Result<Vec<f64>> {
    if z_row.len() != factor.len() {
        return Err(Error::Dimension(format!(
            "row has {} entries, prior has K={}",
            z_row.len(),
            factor.len()
        )));
    }
    let mut p: Vec<f64> = factor.iter().zip(z_row).map(|(a, &z)| a * z.max(EPSILON)).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    Ok(p)
}

/// The per-cell sampling distribution under the prior's [`Combination`].
pub fn combined_prob(prior: &MarkovPrior, context: &[u16], z_row: &[f64]) -> Result<Vec<f64>> {
    match prior.combination() {
        Combination::Product => cond_prob(prior, context, z_row),
        Combination::Calibrated => calibrated_prob(prior, context, z_row),
    }
}

fn check_inputs(prior: &MarkovPrior, z: &DistributionGrid, perm: &OrderPermutation) -> Result<()> {
    if z.k() != prior.k() {
        return Err(Error::Dimension(format!("grid K={} but prior K={}", z.k(), prior.k())));
    }
    if perm.len() != z.cells() {
        return Err(Error::Config(format!(
            "permutation covers {} cells, grid has {}",
            perm.len(),
            z.cells()
        )));
    }
    OrderPermutation::new(perm.as_slice().to_vec()).map(|_| ())
}

/// Draws every cell in `perm` order. Each cell is conditioned on the last m
/// indices generated before it, in generation order, and combined with its Z
/// row by [`combined_prob`].
pub fn sample_sequence(
    prior: &MarkovPrior,
    z: &DistributionGrid,
    perm: &OrderPermutation,
    seed: u64,
) -> Result<IndexGrid> {
    check_inputs(prior, z, perm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut generated: Vec<u16> = Vec::with_capacity(perm.len());
    let mut out = vec![0u16; perm.len()];
    for &cell in perm.as_slice() {
        let start = generated.len().saturating_sub(prior.order());
        let p = combined_prob(prior, &generated[start..], z.row(cell))?;
        let q = draw_index(&p, rng.gen::<f64>()) as u16;
        generated.push(q);
        out[cell] = q;
    }
    IndexGrid::new(z.g(), out)
}

/// Outcome number of an index grid: cell 0 is the least significant digit.
pub fn outcome_index(q: &IndexGrid, k: usize) -> usize {
    q.indices().iter().rev().fold(0, |acc, &c| acc * k + c as usize)
}

/// Exact distribution of [`sample_sequence`] over all K^(g³) grids, indexed by
/// [`outcome_index`].
pub fn exhaustive_joint(prior: &MarkovPrior, z: &DistributionGrid, perm: &OrderPermutation) -> Result<Vec<f64>> {
    check_inputs(prior, z, perm)?;
    let k = prior.k();
    let n = z.cells();
    let outcomes = (0..n)
        .try_fold(1usize, |acc, _| acc.checked_mul(k).filter(|&v| v <= MAX_JOINT_OUTCOMES))
        .ok_or_else(|| Error::Config(format!("K^N exceeds {MAX_JOINT_OUTCOMES} outcomes")))?;
    let mut joint = vec![0.0; outcomes];
    let mut place = vec![1usize; n];
    for c in 1..n {
        place[c] = place[c - 1] * k;
    }
    let mut generated = Vec::with_capacity(n);
    walk(prior, z, perm.as_slice(), &place, &mut generated, 0, 1.0, &mut joint)?;
    Ok(joint)
}

#[allow(clippy::too_many_arguments)]
fn walk(
    prior: &MarkovPrior,
    z: &DistributionGrid,
    perm: &[usize],
    place: &[usize],
    generated: &mut Vec<u16>,
    outcome: usize,
    mass: f64,
    joint: &mut [f64],
) -> Result<()> {
    let step = generated.len();
    if step == perm.len() {
        joint[outcome] += mass;
        return Ok(());
    }
    let cell = perm[step];
    let start = step.saturating_sub(prior.order());
    let p = combined_prob(prior, &generated[start..], z.row(cell))?;
    for (q, &pq) in p.iter().enumerate() {
        generated.push(q as u16);
        walk(prior, z, perm, place, generated, outcome + q * place[cell], mass * pq, joint)?;
        generated.pop();
    }
    Ok(())
}
