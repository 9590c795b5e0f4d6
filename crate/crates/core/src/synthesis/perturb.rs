use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::GenConfig;
use crate::seed::rng_for;
use crate::symh::{KeypointRecord, Vec2};

/// Isotropic Gaussian jitter of `cfg.noise_sigma` on every coordinate, then
/// independent removal of each engine keypoint with probability
/// `cfg.engine_drop`. Deterministic in `seed`.
pub fn perturb_keypoints(rec: &KeypointRecord, cfg: &GenConfig, seed: u64) -> KeypointRecord {
    let mut rng = rng_for(seed, "perturb");
    let mut out = if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("sigma is finite and positive");
        rec.map_points(|p| p + Vec2::new(normal.sample(&mut rng), normal.sample(&mut rng)))
    } else {
        rec.clone()
    };
    if cfg.engine_drop > 0.0 {
        let p = cfg.engine_drop;
        out.engines.retain(|_| rng.random::<f64>() >= p);
    }
    out
}
