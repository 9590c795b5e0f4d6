//! Recovery of hierarchical 3D aircraft structure from 2D component
//! keypoints.
//!
//! The crate covers the whole pipeline: a procedural data generator that
//! produces paired SYMH trees and keypoint records, the keypoint multi-graph,
//! a dual-stream graph encoder with a recursive tree decoder (trained with a
//! small reverse-mode autodiff tape), rule-based refinement of decoded boxes
//! and the evaluation metrics.

pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod postprocess;
pub mod seed;
pub mod symh;
pub mod synthesis;
pub mod training;

pub use error::{Error, Result};
