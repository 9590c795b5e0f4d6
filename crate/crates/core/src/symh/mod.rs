//! Core structure types: oriented bounding boxes, reflection planes, SYMH
//! trees and 2D keypoint records.

mod format;
mod keypoints;
mod obb;
mod tree;

pub use format::{parse_tree, serialize_tree, HEADER};
pub use keypoints::{KeypointRecord, KeypointType, Normalization, Vec2};
pub use obb::{
    obb_corners, obb_third_axis, reflect_obb, Obb, SymmetryParam, Vec3, AXIS_TOLERANCE, EXTENT_FLOOR,
};
pub use tree::{
    flatten_tree, validate_tree, Census, FlatObb, NodeKind, SymhNode, SymhTree, Violation,
};
