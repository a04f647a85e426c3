//! Independent reference implementations used as test oracles. They share no
//! code with the crate beyond its public types.
#![allow(dead_code)]

pub mod goldens;

use rand::Rng;
use recshape_core::distribution_grid::DistributionGrid;
use recshape_core::voxel_shapes::{voxel_coords, OccupancyGrid};
use recshape_core::vq_codec::IndexGrid;

/// Weighted index histogram over one-hot grids, per cell.
pub fn brute_mix(grids: &[IndexGrid], weights: &[f64], k: usize) -> Vec<f64> {
    let cells = grids[0].len();
    let total: f64 = weights.iter().sum();
    let mut out = vec![0.0; cells * k];
    for cell in 0..cells {
        for (q, &w) in grids.iter().zip(weights) {
            out[cell * k + q.indices()[cell] as usize] += w / total;
        }
    }
    out
}

/// Cell order by descending squared change, ties by index, via a stable sort
/// over a precomputed key list.
pub fn sort_order(a: &DistributionGrid, b: &DistributionGrid) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = (0..a.cells())
        .map(|c| {
            let d: f64 = a.row(c).iter().zip(b.row(c)).map(|(x, y)| (x - y).powi(2)).sum();
            (d, c)
        })
        .collect();
    keyed.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
    keyed.into_iter().map(|(_, c)| c).collect()
}

pub fn brute_nearest(patch: &[f32], codewords: &[Vec<f32>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in codewords.iter().enumerate() {
        let d: f64 = patch.iter().zip(c).map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2)).sum();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn centers(g: &OccupancyGrid) -> Vec<[f64; 3]> {
    let r = g.resolution();
    g.bits()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| {
            let (x, y, z) = voxel_coords(r, i);
            [(x as f64 + 0.5) / r as f64, (y as f64 + 0.5) / r as f64, (z as f64 + 0.5) / r as f64]
        })
        .collect()
}

/// O(n·m) symmetric Chamfer over voxel centers in the unit cube.
pub fn brute_chamfer(a: &OccupancyGrid, b: &OccupancyGrid) -> f64 {
    let (pa, pb) = (centers(a), centers(b));
    let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    directed(&pa, &pb) + directed(&pb, &pa)
}

pub fn random_occupancy<R: Rng>(rng: &mut R, r: usize, density: f64) -> OccupancyGrid {
    let mut bits: Vec<bool> = (0..r * r * r).map(|_| rng.gen_bool(density)).collect();
    if !bits.iter().any(|&b| b) {
        let i = rng.gen_range(0..bits.len());
        bits[i] = true;
    }
    OccupancyGrid::new(r, bits).unwrap()
}

/// A random grid whose rows are strictly positive.
pub fn random_grid<R: Rng>(rng: &mut R, g: usize, k: usize) -> DistributionGrid {
    let w = (0..g * g * g * k).map(|_| rng.gen_range(0.01..1.0)).collect();
    DistributionGrid::from_weights(g, k, w).unwrap()
}

/// A random grid where some rows repeat across draws, so ties occur.
pub fn coarse_grid<R: Rng>(rng: &mut R, g: usize, k: usize) -> DistributionGrid {
    let w = (0..g * g * g * k).map(|_| f64::from(rng.gen_range(1u8..4))).collect();
    DistributionGrid::from_weights(g, k, w).unwrap()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
