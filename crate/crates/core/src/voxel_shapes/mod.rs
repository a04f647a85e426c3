//! Procedural furniture shapes as truncated signed distance fields.

mod captions;
mod corpus;
mod grid;
mod mesh;
mod metrics;
mod sdf;
mod spec;

pub use captions::{caption_tokens, parse_attributes, value_key, CaptionTemplates};
pub use corpus::{
    gen_captions, gen_corpus, load_corpus, read_corpus, save_corpus, write_corpus, CorpusConfig,
    CorpusEntry,
};
pub use grid::{
    voxel_coords, voxel_index, OccupancyGrid, PartLabel, PartMask, TsdfGrid, DEFAULT_RESOLUTION,
    DEFAULT_TRUNCATION,
};
pub use mesh::{export_mesh, export_mesh_with_stats, MeshStats};
pub use metrics::{chamfer_distance, iou, squared_distance_field};
pub use sdf::{rasterize_parts, union_sdf, Part, Primitive};
pub use spec::{AttrKey, AttrValue, Attributes, Category, LegStyle, ShapeSpec, PART_UNIT};

use crate::{Error, Result};

/// Latent grid size the shape resolution must be divisible by.
pub const DEFAULT_GRID: usize = 8;

/// Rasterizes a spec at the default truncation band.
pub fn gen_shape(spec: &ShapeSpec, resolution: usize) -> Result<(TsdfGrid, PartMask)> {
    gen_shape_with(spec, resolution, DEFAULT_TRUNCATION)
}

pub fn gen_shape_with(spec: &ShapeSpec, resolution: usize, truncation: f32) -> Result<(TsdfGrid, PartMask)> {
    if resolution < 8 || resolution % DEFAULT_GRID != 0 {
        return Err(Error::Config(format!(
            "resolution {resolution} must be at least 8 and divisible by {DEFAULT_GRID}"
        )));
    }
    rasterize_parts(&spec.parts()?, resolution, truncation)
}
