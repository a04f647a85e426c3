//! Per-cell categorical distributions over codebook indices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::vq_codec::IndexGrid;
use crate::{decode_f32s, encode_f32s, Error, Result};

/// Floor applied before a probability is logged or divided by.
pub const EPSILON: f64 = 1e-12;
/// Row-sum tolerance for a valid distribution.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// g³ rows of K probabilities, rows in raster cell order.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionGrid {
    g: usize,
    k: usize,
    probs: Vec<f64>,
}

impl DistributionGrid {
    /// Wraps already-normalized rows; rejects negative or unnormalized input.
    pub fn new(g: usize, k: usize, probs: Vec<f64>) -> Result<Self> {
        check_dims(g, k, probs.len())?;
        for (i, row) in probs.chunks(k).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Numeric(format!("cell {i} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::Numeric(format!("cell {i} sums to {s}")));
            }
        }
        Ok(Self { g, k, probs })
    }

    /// Normalizes each row of non-negative weights. A zero row becomes uniform.
    pub fn from_weights(g: usize, k: usize, mut weights: Vec<f64>) -> Result<Self> {
        check_dims(g, k, weights.len())?;
        for (i, row) in weights.chunks_mut(k).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Numeric(format!("cell {i} has a negative or non-finite weight")));
            }
            normalize_row(row);
        }
        Ok(Self { g, k, probs: weights })
    }

    pub fn uniform(g: usize, k: usize) -> Self {
        assert!(g > 0 && k > 0, "uniform grid needs positive g and K");
        Self {
            g,
            k,
            probs: vec![1.0 / k as f64; g.pow(3) * k],
        }
    }

    pub fn from_index_grid(q: &IndexGrid, k: usize) -> Result<Self> {
        q.check_k(k)?;
        let mut probs = vec![0.0; q.len() * k];
        for (i, &c) in q.indices().iter().enumerate() {
            probs[i * k + c as usize] = 1.0;
        }
        Ok(Self { g: q.g(), k, probs })
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cells(&self) -> usize {
        self.g.pow(3)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, cell: usize) -> &[f64] {
        &self.probs[cell * self.k..(cell + 1) * self.k]
    }

    pub fn rows(&self) -> std::slice::Chunks<'_, f64> {
        self.probs.chunks(self.k)
    }

    /// Most probable code per cell, lowest index on ties.
    pub fn argmax(&self) -> IndexGrid {
        let indices = self
            .rows()
            .map(|row| {
                let mut best = 0;
                for (k, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = k;
                    }
                }
                best as u16
            })
            .collect();
        IndexGrid::new(self.g, indices).expect("argmax keeps the grid shape")
    }

    /// Copy with every entry raised to at least [`EPSILON`], rows renormalized.
    pub fn floored(&self) -> Self {
        let mut probs: Vec<f64> = self.probs.iter().map(|p| p.max(EPSILON)).collect();
        for row in probs.chunks_mut(self.k) {
            normalize_row(row);
        }
        Self {
            g: self.g,
            k: self.k,
            probs,
        }
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.g != other.g || self.k != other.k {
            return Err(Error::Dimension(format!(
                "grid ({}, {}) vs ({}, {})",
                self.g, self.k, other.g, other.k
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_record())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_record(&serde_json::from_str(text)?)
    }

    pub fn to_record(&self) -> ZRecord {
        ZRecord {
            g: self.g,
            k: self.k,
            probs: encode_f32s(self.probs.iter().map(|&p| p as f32)),
        }
    }

    /// Decodes a stored grid; rows are renormalized after the f32 round trip.
    pub fn from_record(rec: &ZRecord) -> Result<Self> {
        let values: Vec<f64> = decode_f32s(&rec.probs)?.into_iter().map(f64::from).collect();
        Self::from_weights(rec.g, rec.k, values)
    }
}

/// Stored form of a distribution grid: base-64 little-endian f32, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZRecord {
    pub g: usize,
    pub k: usize,
    pub probs: String,
}

fn check_dims(g: usize, k: usize, len: usize) -> Result<()> {
    if g == 0 || k == 0 {
        return Err(Error::Dimension("g and K must be positive".into()));
    }
    if len != g.pow(3) * k {
        return Err(Error::Dimension(format!(
            "expected {} probabilities for g={g}, K={k}, got {len}",
            g.pow(3) * k
        )));
    }
    Ok(())
}

pub(crate) fn normalize_row(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    if s > 0.0 {
        row.iter_mut().for_each(|p| *p /= s);
    } else {
        let u = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|p| *p = u);
    }
}

/// Weighted mixture of grids: Σ w_j Z_j / Σ w_j.
pub fn mix(zs: &[&DistributionGrid], weights: &[f64]) -> Result<DistributionGrid> {
    let first = zs.first().ok_or_else(|| Error::Config("mix needs at least one grid".into()))?;
    if zs.len() != weights.len() {
        return Err(Error::Dimension(format!("{} grids but {} weights", zs.len(), weights.len())));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Config("mixture weights must be positive".into()));
    }
    for z in &zs[1..] {
        first.same_shape(z)?;
    }
    let total: f64 = weights.iter().sum();
    let mut probs = vec![0.0; first.probs.len()];
    for (z, &w) in zs.iter().zip(weights) {
        for (acc, &p) in probs.iter_mut().zip(&z.probs) {
            *acc += w * p;
        }
    }
    probs.iter_mut().for_each(|p| *p /= total);
    for row in probs.chunks_mut(first.k) {
        normalize_row(row);
    }
    Ok(DistributionGrid {
        g: first.g,
        k: first.k,
        probs,
    })
}

/// Natural-log entropy averaged over cells, with 0·ln 0 = 0.
pub fn mean_entropy(z: &DistributionGrid) -> f64 {
    let total: f64 = z
        .rows()
        .map(|row| {
            -row.iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * p.ln())
                .sum::<f64>()
        })
        .sum();
    total / z.cells() as f64
}

/// Per-cell max over codes of the signed increase z_t − z_prev.
pub fn max_diff_grid(z_t: &DistributionGrid, z_prev: &DistributionGrid) -> Result<Vec<f64>> {
    z_t.same_shape(z_prev)?;
    Ok(z_t
        .rows()
        .zip(z_prev.rows())
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x - y)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect())
}

/// Fraction of cells whose max signed increase is below `tau`.
pub fn max_diff_fraction(z_t: &DistributionGrid, z_prev: &DistributionGrid, tau: f64) -> Result<f64> {
    let diffs = max_diff_grid(z_t, z_prev)?;
    Ok(diffs.iter().filter(|&&d| d < tau).count() as f64 / diffs.len() as f64)
}

/// Per-cell max over codes of |z_t − z_prev| / max(z_prev, ε).
pub fn rel_diff_grid(z_t: &DistributionGrid, z_prev: &DistributionGrid) -> Result<Vec<f64>> {
    z_t.same_shape(z_prev)?;
    Ok(z_t
        .rows()
        .zip(z_prev.rows())
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs() / y.max(EPSILON))
                .fold(0.0, f64::max)
        })
        .collect())
}

/// A visiting order over all cells.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderPermutation(Vec<usize>);

impl OrderPermutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &c in &order {
            if c >= order.len() || seen[c] {
                return Err(Error::Config(format!("cell {c} repeated or out of range in permutation")));
            }
            seen[c] = true;
        }
        Ok(Self(order))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Cells by descending squared L2 change, ties by ascending cell index.
pub fn reorder(z_t: &DistributionGrid, z_prev: &DistributionGrid) -> Result<OrderPermutation> {
    z_t.same_shape(z_prev)?;
    let score: Vec<f64> = z_t
        .rows()
        .zip(z_prev.rows())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
        .collect();
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    Ok(OrderPermutation(order))
}

/// Inverse-CDF draw; `u` in [0, 1).
pub(crate) fn draw_index(row: &[f64], u: f64) -> usize {
    let total: f64 = row.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (k, &p) in row.iter().enumerate() {
        acc += p;
        if target < acc {
            return k;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Independent draw per cell in raster order.
pub fn sample_cellwise(z: &DistributionGrid, seed: u64) -> IndexGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = z.rows().map(|row| draw_index(row, rng.gen::<f64>()) as u16).collect();
    IndexGrid::new(z.g, indices).expect("sampling keeps the grid shape")
}
