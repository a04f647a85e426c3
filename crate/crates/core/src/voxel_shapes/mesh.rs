//! Wavefront OBJ export of voxel surfaces.

use std::collections::HashMap;
use std::fmt::Write;

use super::grid::OccupancyGrid;

// Face directions with the four corners of each face, counter-clockwise seen
// from outside.
const FACES: [([i32; 3], [[u32; 3]; 4]); 6] = [
    ([-1, 0, 0], [[0, 0, 0], [0, 0, 1], [0, 1, 1], [0, 1, 0]]),
    ([1, 0, 0], [[1, 0, 0], [1, 1, 0], [1, 1, 1], [1, 0, 1]]),
    ([0, -1, 0], [[0, 0, 0], [1, 0, 0], [1, 0, 1], [0, 0, 1]]),
    ([0, 1, 0], [[0, 1, 0], [0, 1, 1], [1, 1, 1], [1, 1, 0]]),
    ([0, 0, -1], [[0, 0, 0], [0, 1, 0], [1, 1, 0], [1, 0, 0]]),
    ([0, 0, 1], [[0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]]),
];

/// Counts of the last export, mostly for tests and logs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeshStats {
    pub vertices: usize,
    pub triangles: usize,
}

/// Two triangles per exposed voxel face; shared corners are emitted once.
/// Coordinates are in the unit cube.
pub fn export_mesh(occ: &OccupancyGrid) -> String {
    export_mesh_with_stats(occ).0
}

pub fn export_mesh_with_stats(occ: &OccupancyGrid) -> (String, MeshStats) {
    let r = occ.resolution();
    if occ.is_empty() {
        log::warn!("exporting an empty occupancy grid");
    }
    let mut vertex_ids: HashMap<[u32; 3], usize> = HashMap::new();
    let mut vertices: Vec<[u32; 3]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let occupied = |x: i32, y: i32, z: i32| {
        let ri = r as i32;
        (0..ri).contains(&x)
            && (0..ri).contains(&y)
            && (0..ri).contains(&z)
            && occ.get(x as usize, y as usize, z as usize)
    };
    for z in 0..r {
        for y in 0..r {
            for x in 0..r {
                if !occ.get(x, y, z) {
                    continue;
                }
                for (dir, corners) in &FACES {
                    if occupied(x as i32 + dir[0], y as i32 + dir[1], z as i32 + dir[2]) {
                        continue;
                    }
                    let ids: Vec<usize> = corners
                        .iter()
                        .map(|c| {
                            let key = [x as u32 + c[0], y as u32 + c[1], z as u32 + c[2]];
                            *vertex_ids.entry(key).or_insert_with(|| {
                                vertices.push(key);
                                vertices.len() - 1
                            })
                        })
                        .collect();
                    triangles.push([ids[0], ids[1], ids[2]]);
                    triangles.push([ids[0], ids[2], ids[3]]);
                }
            }
        }
    }
    let scale = 1.0 / r as f64;
    let mut out = String::new();
    writeln!(out, "# voxel mesh: {} vertices, {} triangles", vertices.len(), triangles.len()).unwrap();
    for v in &vertices {
        writeln!(
            out,
            "v {} {} {}",
            v[0] as f64 * scale,
            v[1] as f64 * scale,
            v[2] as f64 * scale
        )
        .unwrap();
    }
    for t in &triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    let stats = MeshStats {
        vertices: vertices.len(),
        triangles: triangles.len(),
    };
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_voxel_cube() {
        let mut g = OccupancyGrid::empty(4);
        g.set(1, 2, 3, true);
        let (text, stats) = export_mesh_with_stats(&g);
        assert_eq!(stats, MeshStats { vertices: 8, triangles: 12 });
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 8);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 12);
    }

    #[test]
    fn bar_exposes_ten_faces() {
        let mut g = OccupancyGrid::empty(4);
        g.set(0, 0, 0, true);
        g.set(1, 0, 0, true);
        let (_, stats) = export_mesh_with_stats(&g);
        assert_eq!(stats.triangles, 20);
        assert_eq!(stats.vertices, 12);
    }

    #[test]
    fn re_export_is_identical_and_empty_is_empty() {
        let mut g = OccupancyGrid::empty(4);
        g.set(2, 2, 2, true);
        assert_eq!(export_mesh(&g), export_mesh(&g));
        let (_, stats) = export_mesh_with_stats(&OccupancyGrid::empty(4));
        assert_eq!(stats.triangles, 0);
    }
}
