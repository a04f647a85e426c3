//! Chamfer distance and IoU on occupancy grids.

use super::grid::{voxel_index, OccupancyGrid};
use crate::{Error, Result};

/// Squared distance transform of a 1-D sampled function (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q].is_infinite() {
            continue;
        }
        if f[v[0]].is_infinite() {
            v[0] = q;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    if f[v[0]].is_infinite() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance (in voxels) from every voxel to the nearest
/// occupied voxel.
pub fn squared_distance_field(occ: &OccupancyGrid) -> Vec<f64> {
    let r = occ.resolution();
    let mut d: Vec<f64> = occ
        .bits()
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    let mut f = vec![0.0; r];
    let mut out = vec![0.0; r];
    let mut v = vec![0usize; r];
    let mut z = vec![0.0; r + 1];
    for axis in 0..3 {
        for a in 0..r {
            for b in 0..r {
                let idx = |i: usize| match axis {
                    0 => voxel_index(r, i, a, b),
                    1 => voxel_index(r, a, i, b),
                    _ => voxel_index(r, a, b, i),
                };
                for i in 0..r {
                    f[i] = d[idx(i)];
                }
                edt_1d(&f, &mut out, &mut v, &mut z);
                for i in 0..r {
                    d[idx(i)] = out[i];
                }
            }
        }
    }
    d
}

fn directed_mean(from: &OccupancyGrid, to_field: &[f64]) -> f64 {
    let r = from.resolution() as f64;
    let (sum, n) = from
        .bits()
        .iter()
        .zip(to_field)
        .filter(|(&b, _)| b)
        .fold((0.0, 0usize), |(s, n), (_, &d)| (s + d.sqrt() / r, n + 1));
    sum / n as f64
}

/// Symmetric Chamfer distance between occupied voxel centers in unit-cube
/// coordinates: mean nearest distance a→b plus mean nearest distance b→a.
pub fn chamfer_distance(a: &OccupancyGrid, b: &OccupancyGrid) -> Result<f64> {
    if a.resolution() != b.resolution() {
        return Err(Error::Dimension(format!(
            "resolution mismatch {} vs {}",
            a.resolution(),
            b.resolution()
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::Degenerate("chamfer distance of an empty shape".into()));
    }
    let da = squared_distance_field(a);
    let db = squared_distance_field(b);
    Ok(directed_mean(a, &db) + directed_mean(b, &da))
}

/// Intersection over union; two empty grids count as identical.
pub fn iou(a: &OccupancyGrid, b: &OccupancyGrid) -> Result<f64> {
    if a.resolution() != b.resolution() {
        return Err(Error::Dimension(format!(
            "resolution mismatch {} vs {}",
            a.resolution(),
            b.resolution()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(r: usize, x: usize, y: usize, z: usize) -> OccupancyGrid {
        let mut g = OccupancyGrid::empty(r);
        g.set(x, y, z, true);
        g
    }

    #[test]
    fn offset_voxels() {
        let a = single(32, 3, 4, 5);
        let b = single(32, 4, 4, 5);
        assert!((chamfer_distance(&a, &b).unwrap() - 0.0625).abs() < 1e-15);
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn empty_is_degenerate() {
        let a = single(8, 0, 0, 0);
        assert!(matches!(
            chamfer_distance(&a, &OccupancyGrid::empty(8)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn iou_cases() {
        let mut a = OccupancyGrid::empty(4);
        let mut b = OccupancyGrid::empty(4);
        // a: x in 0..2 (32 voxels), b: x in 1..3 (32 voxels), overlap x=1 (16).
        for y in 0..4 {
            for z in 0..4 {
                a.set(0, y, z, true);
                a.set(1, y, z, true);
                b.set(1, y, z, true);
                b.set(2, y, z, true);
            }
        }
        assert!((iou(&a, &b).unwrap() - 16.0 / 48.0).abs() < 1e-15);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let c = single(4, 3, 3, 3);
        assert_eq!(iou(&a, &c).unwrap(), 0.0);
        assert_eq!(iou(&OccupancyGrid::empty(4), &OccupancyGrid::empty(4)).unwrap(), 1.0);
    }
}
