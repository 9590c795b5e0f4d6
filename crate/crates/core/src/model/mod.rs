//! Dual-stream graph encoder and recursive SYMH decoder.

mod gradcheck;
mod network;
mod params;
mod tape;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use network::{Ablation, GraphBatch, LossBreakdown, LossWeights, Mlp, Model, ModelConfig, TeacherOutputs};
pub use params::{BatchNorm, BufferId, Linear, ParamId, ParamStore};
pub use tape::{BatchStats, Sparse, Tape, Var, BN_EPS};
