//! Procedural aircraft data: part generation, box fitting, relation
//! detection, contraction into SYMH trees, keypoint projection and the
//! on-disk dataset.

mod config;
mod contract;
mod dataset;
mod fit;
mod generator;
mod perturb;
mod project;
pub(crate) mod relations;

pub use config::{GenConfig, Interval};
pub use contract::contract_to_symh;
pub use dataset::{
    model_diagonal, read_manifest, read_sample, read_tree, sample_dir, sample_id, split_counts, symmetry_free,
    synthesize_sample, write_manifest, write_sample, Dataset, Manifest, ManifestEntry, Sample, Split,
    ADJACENCY_FRACTION, SYMMETRY_FRACTION,
};
pub use fit::fit_obb;
pub use generator::{generate_aircraft, Part, PartLabel, PartSet};
pub use perturb::perturb_keypoints;
pub use project::{
    convex_hull, keypoints_from_obbs, min_bounding_rect, point_in_polygon, project_keypoints, projected_rect,
};
pub use relations::{detect_adjacency, detect_symmetry, separating_distance, SymmetryRelations};
