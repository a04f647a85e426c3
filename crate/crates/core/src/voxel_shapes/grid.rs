use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_RESOLUTION: usize = 32;
pub const DEFAULT_TRUNCATION: f32 = 2.5;

/// Raster index with x varying fastest.
#[inline]
pub fn voxel_index(resolution: usize, x: usize, y: usize, z: usize) -> usize {
    x + resolution * (y + resolution * z)
}

#[inline]
pub fn voxel_coords(resolution: usize, index: usize) -> (usize, usize, usize) {
    (
        index % resolution,
        (index / resolution) % resolution,
        index / (resolution * resolution),
    )
}

/// Truncated signed distance field sampled at voxel centers, in voxel units.
/// Negative values are inside the shape.
#[derive(Clone, Debug, PartialEq)]
pub struct TsdfGrid {
    resolution: usize,
    truncation: f32,
    values: Vec<f32>,
}

impl TsdfGrid {
    /// Builds a grid, clamping every value into the truncation band.
    pub fn new(resolution: usize, truncation: f32, mut values: Vec<f32>) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::Dimension("resolution must be positive".into()));
        }
        if !(truncation > 0.0 && truncation.is_finite()) {
            return Err(Error::Config(format!("truncation {truncation} must be positive")));
        }
        let n = resolution.pow(3);
        if values.len() != n {
            return Err(Error::Dimension(format!(
                "expected {n} values for resolution {resolution}, got {}",
                values.len()
            )));
        }
        for v in &mut values {
            if v.is_nan() {
                return Err(Error::Numeric("NaN in distance field".into()));
            }
            *v = v.clamp(-truncation, truncation);
        }
        Ok(Self {
            resolution,
            truncation,
            values,
        })
    }

    pub fn filled(resolution: usize, truncation: f32, value: f32) -> Result<Self> {
        Self::new(resolution, truncation, vec![value; resolution.pow(3)])
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn truncation(&self) -> f32 {
        self.truncation
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.values[voxel_index(self.resolution, x, y, z)]
    }

    pub fn occupancy(&self) -> OccupancyGrid {
        OccupancyGrid {
            resolution: self.resolution,
            bits: self.values.iter().map(|&v| v <= 0.0).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OccupancyGrid {
    resolution: usize,
    bits: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(resolution: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != resolution.pow(3) {
            return Err(Error::Dimension(format!(
                "expected {} occupancy bits, got {}",
                resolution.pow(3),
                bits.len()
            )));
        }
        Ok(Self { resolution, bits })
    }

    pub fn empty(resolution: usize) -> Self {
        Self {
            resolution,
            bits: vec![false; resolution.pow(3)],
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[voxel_index(self.resolution, x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = voxel_index(self.resolution, x, y, z);
        self.bits[i] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Centers of occupied voxels in unit-cube coordinates.
    pub fn occupied_centers(&self) -> Vec<[f64; 3]> {
        let r = self.resolution as f64;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| {
                let (x, y, z) = voxel_coords(self.resolution, i);
                [
                    (x as f64 + 0.5) / r,
                    (y as f64 + 0.5) / r,
                    (z as f64 + 0.5) / r,
                ]
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum PartLabel {
    Empty = 0,
    Seat = 1,
    Top = 2,
    Leg = 3,
    Back = 4,
    Armrest = 5,
    Slat = 6,
    Stretcher = 7,
}

impl PartLabel {
    pub const ALL: [PartLabel; 8] = [
        PartLabel::Empty,
        PartLabel::Seat,
        PartLabel::Top,
        PartLabel::Leg,
        PartLabel::Back,
        PartLabel::Armrest,
        PartLabel::Slat,
        PartLabel::Stretcher,
    ];

    pub fn from_byte(b: u8) -> Result<Self> {
        Self::ALL
            .get(b as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown part label byte {b}")))
    }
}

/// Per-voxel part labels; non-empty exactly where the shape is occupied.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartMask {
    resolution: usize,
    labels: Vec<PartLabel>,
}

impl PartMask {
    pub fn new(resolution: usize, labels: Vec<PartLabel>) -> Result<Self> {
        if labels.len() != resolution.pow(3) {
            return Err(Error::Dimension(format!(
                "expected {} part labels, got {}",
                resolution.pow(3),
                labels.len()
            )));
        }
        Ok(Self { resolution, labels })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn labels(&self) -> &[PartLabel] {
        &self.labels
    }

    pub fn count(&self, label: PartLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.labels.iter().map(|&l| l as u8).collect()
    }

    pub fn from_bytes(resolution: usize, bytes: &[u8]) -> Result<Self> {
        let labels = bytes
            .iter()
            .map(|&b| PartLabel::from_byte(b))
            .collect::<Result<Vec<_>>>()?;
        Self::new(resolution, labels)
    }

    pub fn consistent_with(&self, occ: &OccupancyGrid) -> bool {
        self.resolution == occ.resolution()
            && self
                .labels
                .iter()
                .zip(occ.bits())
                .all(|(&l, &b)| (l != PartLabel::Empty) == b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_order_is_x_fastest() {
        assert_eq!(voxel_index(4, 1, 0, 0), 1);
        assert_eq!(voxel_index(4, 0, 1, 0), 4);
        assert_eq!(voxel_index(4, 0, 0, 1), 16);
        for i in 0..64 {
            let (x, y, z) = voxel_coords(4, i);
            assert_eq!(voxel_index(4, x, y, z), i);
        }
    }

    #[test]
    fn values_are_clamped_to_band() {
        let g = TsdfGrid::new(2, 2.5, vec![-9.0, 9.0, 0.0, 1.0, -1.0, 2.5, -2.5, 3.0]).unwrap();
        assert!(g.values().iter().all(|v| v.abs() <= 2.5));
        assert_eq!(g.values()[0], -2.5);
        assert_eq!(g.values()[1], 2.5);
    }

    #[test]
    fn occupancy_is_nonpositive_values() {
        let g = TsdfGrid::new(2, 2.5, vec![-1.0, 0.0, 0.5, 1.0, 2.0, -0.1, 2.5, 2.5]).unwrap();
        let occ = g.occupancy();
        assert_eq!(occ.count(), 3);
        assert!(occ.bits()[0] && occ.bits()[1] && occ.bits()[5]);
    }

    #[test]
    fn wrong_length_rejected() {
        assert!(TsdfGrid::new(2, 2.5, vec![0.0; 7]).is_err());
        assert!(TsdfGrid::new(2, -1.0, vec![0.0; 8]).is_err());
        assert!(OccupancyGrid::new(2, vec![true; 9]).is_err());
    }
}
