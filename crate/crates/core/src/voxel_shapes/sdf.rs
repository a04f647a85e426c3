//! Exact signed distance functions for the primitives furniture is built from.

use super::grid::{voxel_index, PartLabel, PartMask, TsdfGrid};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    /// Axis-aligned box given by its min and max corners.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Capped cylinder with a vertical (y) axis.
    Cylinder {
        center_xz: [f64; 2],
        radius: f64,
        y_min: f64,
        y_max: f64,
    },
}

impl Primitive {
    pub fn sdf(&self, p: [f64; 3]) -> f64 {
        match *self {
            Primitive::Box { min, max } => {
                let mut q = [0.0; 3];
                for a in 0..3 {
                    let c = 0.5 * (min[a] + max[a]);
                    let h = 0.5 * (max[a] - min[a]);
                    q[a] = (p[a] - c).abs() - h;
                }
                let outside = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
                let inside = q[0].max(q[1]).max(q[2]).min(0.0);
                outside + inside
            }
            Primitive::Cylinder {
                center_xz,
                radius,
                y_min,
                y_max,
            } => {
                let dx = p[0] - center_xz[0];
                let dz = p[2] - center_xz[1];
                let radial = (dx * dx + dz * dz).sqrt() - radius;
                let cy = 0.5 * (y_min + y_max);
                let hy = 0.5 * (y_max - y_min);
                let axial = (p[1] - cy).abs() - hy;
                let outside = (radial.max(0.0).powi(2) + axial.max(0.0).powi(2)).sqrt();
                outside + radial.max(axial).min(0.0)
            }
        }
    }

    pub fn is_degenerate(&self) -> bool {
        match *self {
            Primitive::Box { min, max } => (0..3).any(|a| !(max[a] > min[a])),
            Primitive::Cylinder {
                radius,
                y_min,
                y_max,
                ..
            } => !(radius > 0.0 && y_max > y_min),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Part {
    pub label: PartLabel,
    pub primitive: Primitive,
}

impl Part {
    pub fn cuboid(label: PartLabel, min: [f64; 3], max: [f64; 3]) -> Self {
        Self {
            label,
            primitive: Primitive::Box { min, max },
        }
    }

    pub fn cylinder(label: PartLabel, center_xz: [f64; 2], radius: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            label,
            primitive: Primitive::Cylinder {
                center_xz,
                radius,
                y_min,
                y_max,
            },
        }
    }
}

/// Untruncated union distance (unit-cube units) and the index of the closest part.
pub fn union_sdf(parts: &[Part], p: [f64; 3]) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for (i, part) in parts.iter().enumerate() {
        let d = part.primitive.sdf(p);
        if d < best.0 {
            best = (d, i);
        }
    }
    best
}

/// Samples the union of `parts` at voxel centers of an `resolution`³ lattice over
/// the unit cube. Distances are converted to voxel units and clamped.
pub fn rasterize_parts(parts: &[Part], resolution: usize, truncation: f32) -> Result<(TsdfGrid, PartMask)> {
    if parts.is_empty() {
        return Err(Error::InvalidSpec("shape has no parts".into()));
    }
    if let Some(p) = parts.iter().find(|p| p.primitive.is_degenerate()) {
        return Err(Error::InvalidSpec(format!("degenerate {:?} part", p.label)));
    }
    let r = resolution;
    let scale = r as f64;
    let mut values = vec![0.0f32; r * r * r];
    let mut labels = vec![PartLabel::Empty; r * r * r];
    for z in 0..r {
        for y in 0..r {
            for x in 0..r {
                let p = [
                    (x as f64 + 0.5) / scale,
                    (y as f64 + 0.5) / scale,
                    (z as f64 + 0.5) / scale,
                ];
                let (d, which) = union_sdf(parts, p);
                let v = (d * scale) as f32;
                let i = voxel_index(r, x, y, z);
                values[i] = v;
                if v <= 0.0 {
                    labels[i] = parts[which].label;
                }
            }
        }
    }
    let tsdf = TsdfGrid::new(r, truncation, values)?;
    let mask = PartMask::new(r, labels)?;
    Ok((tsdf, mask))
}
