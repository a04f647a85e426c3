//! Patch codebook: shapes to index grids and back.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::voxel_shapes::{voxel_index, TsdfGrid};
use crate::{decode_f32s, encode_f32s, Error, Result};

/// Occupancy temperature for the reconstruction cross-entropy, in voxels.
pub const OCCUPANCY_TEMPERATURE: f64 = 0.5;
const PROB_FLOOR: f64 = 1e-12;

/// A g³ grid of codebook indices in raster order (x fastest).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexGrid {
    g: usize,
    indices: Vec<u16>,
}

impl IndexGrid {
    pub fn new(g: usize, indices: Vec<u16>) -> Result<Self> {
        if g == 0 || indices.len() != g.pow(3) {
            return Err(Error::Dimension(format!(
                "index grid of side {g} needs {} entries, got {}",
                g.pow(3),
                indices.len()
            )));
        }
        Ok(Self { g, indices })
    }

    pub fn zeros(g: usize) -> Self {
        Self {
            g,
            indices: vec![0; g.pow(3)],
        }
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u16] {
        &self.indices
    }

    pub fn max_index(&self) -> u16 {
        self.indices.iter().copied().max().unwrap_or(0)
    }

    pub fn check_k(&self, k: usize) -> Result<()> {
        match self.indices.iter().find(|&&q| q as usize >= k) {
            Some(q) => Err(Error::Dimension(format!("index {q} out of range for K={k}"))),
            None => Ok(()),
        }
    }
}

/// Splits a grid into g³ non-overlapping (R/g)³ blocks. Blocks and the values
/// inside each block are both in raster order.
pub fn extract_patches(tsdf: &TsdfGrid, g: usize) -> Result<Vec<Vec<f32>>> {
    let r = tsdf.resolution();
    if g == 0 || r % g != 0 {
        return Err(Error::Dimension(format!("resolution {r} not divisible by g={g}")));
    }
    let p = r / g;
    let values = tsdf.values();
    let mut patches = Vec::with_capacity(g.pow(3));
    for cz in 0..g {
        for cy in 0..g {
            for cx in 0..g {
                let mut patch = Vec::with_capacity(p.pow(3));
                for lz in 0..p {
                    for ly in 0..p {
                        for lx in 0..p {
                            patch.push(values[voxel_index(r, cx * p + lx, cy * p + ly, cz * p + lz)]);
                        }
                    }
                }
                patches.push(patch);
            }
        }
    }
    Ok(patches)
}

/// Inverse of [`extract_patches`].
pub fn assemble_patches(patches: &[Vec<f32>], g: usize, truncation: f32) -> Result<TsdfGrid> {
    if patches.len() != g.pow(3) || patches.is_empty() {
        return Err(Error::Dimension(format!("expected {} patches", g.pow(3))));
    }
    let dim = patches[0].len();
    let p = (dim as f64).cbrt().round() as usize;
    if p.pow(3) != dim || patches.iter().any(|q| q.len() != dim) {
        return Err(Error::Dimension("patches must be equal-sized cubes".into()));
    }
    let r = g * p;
    let mut values = vec![0.0f32; r.pow(3)];
    for (i, patch) in patches.iter().enumerate() {
        let (cx, cy, cz) = (i % g, (i / g) % g, i / (g * g));
        let mut j = 0;
        for lz in 0..p {
            for ly in 0..p {
                for lx in 0..p {
                    values[voxel_index(r, cx * p + lx, cy * p + ly, cz * p + lz)] = patch[j];
                    j += 1;
                }
            }
        }
    }
    TsdfGrid::new(r, truncation, values)
}

/// K codewords, each a (R/g)³ patch of distance values.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    g: usize,
    patch_dim: usize,
    truncation: f32,
    codewords: Vec<Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    k: usize,
    g: usize,
    patch_dim: usize,
    truncation: f32,
    codewords: String,
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

impl Codebook {
    pub fn new(g: usize, truncation: f32, codewords: Vec<Vec<f32>>) -> Result<Self> {
        if codewords.is_empty() {
            return Err(Error::Config("codebook needs at least one codeword".into()));
        }
        if codewords.len() > u16::MAX as usize {
            return Err(Error::Config("too many codewords".into()));
        }
        let patch_dim = codewords[0].len();
        let p = (patch_dim as f64).cbrt().round() as usize;
        if p == 0 || p.pow(3) != patch_dim || codewords.iter().any(|c| c.len() != patch_dim) {
            return Err(Error::Dimension("codewords must be equal-sized cubic patches".into()));
        }
        let codewords = codewords
            .into_iter()
            .map(|c| c.into_iter().map(|v| v.clamp(-truncation, truncation)).collect())
            .collect();
        Ok(Self {
            g,
            patch_dim,
            truncation,
            codewords,
        })
    }

    pub fn k(&self) -> usize {
        self.codewords.len()
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_dim
    }

    pub fn patch_side(&self) -> usize {
        (self.patch_dim as f64).cbrt().round() as usize
    }

    pub fn resolution(&self) -> usize {
        self.g * self.patch_side()
    }

    pub fn truncation(&self) -> f32 {
        self.truncation
    }

    pub fn codewords(&self) -> &[Vec<f32>] {
        &self.codewords
    }

    /// Nearest codeword and its squared distance; ties go to the lowest index.
    pub fn nearest(&self, patch: &[f32]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (k, c) in self.codewords.iter().enumerate() {
            let d = sq_dist(patch, c);
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }

    /// Pairs of identical codewords; training should not produce any.
    pub fn duplicate_codewords(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.k() {
            for j in i + 1..self.k() {
                if self.codewords[i] == self.codewords[j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CodebookFile {
            k: self.k(),
            g: self.g,
            patch_dim: self.patch_dim,
            truncation: self.truncation,
            codewords: encode_f32s(self.codewords.iter().flatten().copied()),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CodebookFile = serde_json::from_str(text)?;
        let flat = decode_f32s(&file.codewords)?;
        if file.patch_dim == 0 || flat.len() != file.k * file.patch_dim {
            return Err(Error::Format(format!(
                "codebook block has {} floats, header says {}x{}",
                flat.len(),
                file.k,
                file.patch_dim
            )));
        }
        let codewords = flat.chunks(file.patch_dim).map(<[f32]>::to_vec).collect();
        Self::new(file.g, file.truncation, codewords)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Outcome of [`train_codebook`].
#[derive(Clone, Debug)]
pub struct CodebookTraining {
    pub codebook: Codebook,
    /// Mean squared patch distortion after each assignment step.
    pub distortion: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Weighted distinct patches, sorted by their bit patterns.
fn distinct_patches(shapes: &[TsdfGrid], g: usize) -> Result<(Vec<Vec<f32>>, Vec<f64>)> {
    let mut counts: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for s in shapes {
        for patch in extract_patches(s, g)? {
            let key: Vec<u32> = patch.iter().map(|v| v.to_bits()).collect();
            *counts.entry(key).or_insert(0.0) += 1.0;
        }
    }
    let mut patches = Vec::with_capacity(counts.len());
    let mut weights = Vec::with_capacity(counts.len());
    for (key, w) in counts {
        patches.push(key.into_iter().map(f32::from_bits).collect());
        weights.push(w);
    }
    Ok((patches, weights))
}

fn assign(patches: &[Vec<f32>], centers: &[Vec<f32>], assignment: &mut [usize], dist: &mut [f64]) {
    for (i, p) in patches.iter().enumerate() {
        let mut best = (0, f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let d = sq_dist(p, c);
            if d < best.1 {
                best = (k, d);
            }
        }
        assignment[i] = best.0;
        dist[i] = best.1;
    }
}

/// Independent k-means++ restarts used by [`train_codebook`].
pub const DEFAULT_RESTARTS: usize = 8;

/// Weighted k-means over distinct patches: k-means++ seeding, then Lloyd
/// iterations until the assignment stops changing or `iterations` is reached.
/// The best of [`DEFAULT_RESTARTS`] seedings is kept.
pub fn train_codebook(shapes: &[TsdfGrid], k: usize, iterations: usize, seed: u64) -> Result<CodebookTraining> {
    train_codebook_with(
        shapes,
        crate::voxel_shapes::DEFAULT_GRID,
        k,
        iterations,
        DEFAULT_RESTARTS,
        seed,
    )
}

pub fn train_codebook_with(
    shapes: &[TsdfGrid],
    g: usize,
    k: usize,
    iterations: usize,
    restarts: usize,
    seed: u64,
) -> Result<CodebookTraining> {
    if shapes.is_empty() {
        return Err(Error::Config("no shapes to train on".into()));
    }
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let r = shapes[0].resolution();
    if shapes.iter().any(|s| s.resolution() != r) {
        return Err(Error::Dimension("shapes have different resolutions".into()));
    }
    let total = shapes.len() * g.pow(3);
    if total < k {
        return Err(Error::Config(format!("{total} patches cannot fill K={k} codewords")));
    }
    let truncation = shapes[0].truncation();
    let (patches, weights) = distinct_patches(shapes, g)?;
    let k = if patches.len() < k {
        log::warn!("only {} distinct patches; reducing K from {k}", patches.len());
        patches.len()
    } else {
        k
    };
    let mut best: Option<(Vec<Vec<f32>>, Vec<f64>, bool)> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let run = lloyd(&patches, &weights, k, iterations, &mut rng);
        let last = *run.1.last().expect("at least one iteration");
        log::debug!("k-means restart {restart}: distortion {last}");
        if best.as_ref().map_or(true, |b| last < *b.1.last().expect("non-empty")) {
            best = Some(run);
        }
    }
    let (centers, distortion, converged) = best.expect("at least one restart");
    let codebook = Codebook::new(g, truncation, centers)?;
    let dups = codebook.duplicate_codewords();
    if !dups.is_empty() {
        log::warn!("codebook has {} duplicate codeword pairs", dups.len());
    }
    Ok(CodebookTraining {
        codebook,
        iterations: distortion.len(),
        distortion,
        converged,
    })
}

fn pick_weighted(rng: &mut ChaCha8Rng, mass: &[f64]) -> usize {
    let total: f64 = mass.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &m) in mass.iter().enumerate() {
        if u < m {
            return i;
        }
        u -= m;
    }
    mass.iter().rposition(|&m| m > 0.0).unwrap_or(0)
}

/// One seeded k-means run. Returns centers, distortion after each assignment,
/// and whether the assignment reached a fixpoint.
fn lloyd(
    patches: &[Vec<f32>],
    weights: &[f64],
    k: usize,
    iterations: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f32>>, Vec<f64>, bool) {
    let n = patches.len();
    let mut centers: Vec<Vec<f32>> = vec![patches[pick_weighted(rng, weights)].clone()];
    let mut d2: Vec<f64> = patches.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let mass: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        let next = pick_weighted(rng, &mass);
        centers.push(patches[next].clone());
        for (i, p) in patches.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }

    let total_weight: f64 = weights.iter().sum();
    let mut assignment = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    let mut previous = assignment.clone();
    let mut history = Vec::new();
    let mut converged = false;
    let dim = patches[0].len();
    for _ in 0..iterations.max(1) {
        assign(patches, &centers, &mut assignment, &mut dist);
        let distortion: f64 = dist.iter().zip(weights).map(|(d, w)| d * w).sum::<f64>() / total_weight;
        history.push(distortion);
        if assignment == previous {
            converged = true;
            break;
        }
        previous.copy_from_slice(&assignment);

        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut mass = vec![0.0f64; k];
        for (i, p) in patches.iter().enumerate() {
            let c = assignment[i];
            mass[c] += weights[i];
            for (s, &v) in sums[c].iter_mut().zip(p) {
                *s += weights[i] * f64::from(v);
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if mass[c] > 0.0 {
                centers[c] = sums[c].iter().map(|s| (s / mass[c]) as f32).collect();
            } else {
                // Reseed to the patch farthest from its current center.
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .expect("more distinct patches than clusters");
                taken[far] = true;
                dist[far] = 0.0;
                log::debug!("reseeding empty cluster {c} to patch {far}");
                centers[c] = patches[far].clone();
            }
        }
    }
    (centers, history, converged)
}

pub fn encode(tsdf: &TsdfGrid, codebook: &Codebook) -> Result<IndexGrid> {
    if tsdf.resolution() != codebook.resolution() {
        return Err(Error::Dimension(format!(
            "shape resolution {} does not match codebook resolution {}",
            tsdf.resolution(),
            codebook.resolution()
        )));
    }
    let indices = extract_patches(tsdf, codebook.g())?
        .iter()
        .map(|p| codebook.nearest(p).0 as u16)
        .collect();
    IndexGrid::new(codebook.g(), indices)
}

pub fn decode(q: &IndexGrid, codebook: &Codebook) -> Result<TsdfGrid> {
    if q.g() != codebook.g() {
        return Err(Error::Dimension(format!(
            "index grid side {} does not match codebook g={}",
            q.g(),
            codebook.g()
        )));
    }
    q.check_k(codebook.k())?;
    let patches: Vec<Vec<f32>> = q
        .indices()
        .iter()
        .map(|&i| codebook.codewords()[i as usize].clone())
        .collect();
    assemble_patches(&patches, codebook.g(), codebook.truncation())
}

/// Diagnostic loss terms of the quantized reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecLosses {
    pub bce_reconstruction: f64,
    pub vq_term: f64,
    pub commitment_term: f64,
    /// Reported weights; nothing is trained against them.
    pub alpha: f64,
    pub beta: f64,
}

/// Predicted occupancy probability of a distance value.
pub fn occupancy_probability(sdf: f32) -> f64 {
    1.0 / (1.0 + (f64::from(sdf) / OCCUPANCY_TEMPERATURE).exp())
}

pub fn codec_losses(tsdf: &TsdfGrid, codebook: &Codebook) -> Result<CodecLosses> {
    let q = encode(tsdf, codebook)?;
    let decoded = decode(&q, codebook)?;
    let mut bce = 0.0;
    for (&target, &pred) in tsdf.values().iter().zip(decoded.values()) {
        let p = occupancy_probability(pred).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        bce -= if target <= 0.0 { p.ln() } else { (1.0 - p).ln() };
    }
    bce /= tsdf.values().len() as f64;
    let patches = extract_patches(tsdf, codebook.g())?;
    let vq = patches.iter().map(|p| codebook.nearest(p).1).sum::<f64>() / patches.len() as f64;
    Ok(CodecLosses {
        bce_reconstruction: bce,
        vq_term: vq,
        commitment_term: vq,
        alpha: 1.0,
        beta: 0.25,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(r: usize) -> TsdfGrid {
        let values = (0..r.pow(3)).map(|i| (i % 7) as f32 - 3.0).collect();
        TsdfGrid::new(r, 2.5, values).unwrap()
    }

    #[test]
    fn patch_arithmetic() {
        let t = ramp(32);
        let patches = extract_patches(&t, 8).unwrap();
        assert_eq!(patches.len(), 512);
        assert!(patches.iter().all(|p| p.len() == 64));
        // Patch (1, 2, 3), local voxel (3, 0, 1).
        let i = 1 + 8 * (2 + 8 * 3);
        let local = 3 + 4 * (0 + 4 * 1);
        assert_eq!(patches[i][local], t.get(4 + 3, 8, 12 + 1));
        assert_eq!(assemble_patches(&patches, 8, 2.5).unwrap(), t);
        assert!(extract_patches(&t, 5).is_err());
    }

    #[test]
    fn single_codeword_is_mean() {
        let shapes = vec![ramp(8)];
        let t = train_codebook_with(&shapes, 2, 1, 10, 1, 0).unwrap();
        let patches = extract_patches(&shapes[0], 2).unwrap();
        for d in 0..patches[0].len() {
            let mean = patches.iter().map(|p| f64::from(p[d])).sum::<f64>() / patches.len() as f64;
            assert!((f64::from(t.codebook.codewords()[0][d]) - mean).abs() < 1e-6);
        }
        let q = encode(&shapes[0], &t.codebook).unwrap();
        assert!(q.indices().iter().all(|&i| i == 0));
    }

    #[test]
    fn codebook_file_round_trip() {
        let cb = Codebook::new(2, 2.5, vec![vec![0.5; 8], vec![-1.0; 8]]).unwrap();
        assert_eq!(Codebook::from_json(&cb.to_json().unwrap()).unwrap(), cb);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let cb = Codebook::new(1, 2.5, vec![vec![1.0; 8], vec![-1.0; 8], vec![1.0; 8]]).unwrap();
        assert_eq!(cb.nearest(&[0.0; 8]).0, 0);
        assert_eq!(cb.nearest(&[1.0; 8]).0, 0);
        assert_eq!(cb.duplicate_codewords(), vec![(0, 2)]);
    }

    #[test]
    fn bce_of_matching_hard_occupancy() {
        // Every voxel is a full truncation band away from the surface.
        let values: Vec<f32> = (0..64).map(|i| if i % 2 == 0 { -2.5 } else { 2.5 }).collect();
        let t = TsdfGrid::new(4, 2.5, values).unwrap();
        let patches = extract_patches(&t, 1).unwrap();
        let cb = Codebook::new(1, 2.5, patches).unwrap();
        let l = codec_losses(&t, &cb).unwrap();
        assert_eq!(l.vq_term, 0.0);
        let bound = (1.0 + (-5.0f64).exp()).ln();
        assert!((l.bce_reconstruction - bound).abs() < 1e-12);
    }
}
