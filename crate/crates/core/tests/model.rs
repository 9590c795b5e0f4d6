use symh::graph::build_graph;
use symh::model::{gradient_check, LossWeights, Model, ModelConfig};
use symh::symh::{KeypointRecord, NodeKind, Vec2};
use symh::synthesis::{synthesize_sample, GenConfig};

fn small_config() -> ModelConfig {
    ModelConfig { d: 4, steps: 2, hidden: 5, max_depth: 6, ..ModelConfig::default() }
}

fn five_node_record(shift: f64) -> KeypointRecord {
    KeypointRecord {
        nose: Vec2::new(1.0, 0.05 * shift),
        fuselage_center: Vec2::new(0.1 * shift, 0.0),
        tail: Vec2::new(-1.0, -0.02),
        engines: vec![Vec2::new(0.2, 0.5 + 0.1 * shift), Vec2::new(0.15, -0.45)],
        left_wing: None,
        right_wing: None,
    }
}

#[test]
fn gradients_match_finite_differences() {
    let model = Model::new(small_config(), 5).unwrap();
    let graphs = [build_graph(&five_node_record(0.0)).unwrap(), build_graph(&five_node_record(1.0)).unwrap()];
    let s0 = synthesize_sample(&GenConfig::default().with_engines(0), 0).unwrap();
    let s1 = synthesize_sample(&GenConfig::default().with_engines(2), 1).unwrap();
    let report = gradient_check(
        &model,
        &[&graphs[0], &graphs[1]],
        &[&s0.tree, &s1.tree],
        &LossWeights::default(),
        1e-4,
        1e-5,
    )
    .unwrap();
    println!("{report:?}");
    assert!(report.checked > 0);
    assert!(report.max_rel_error < 1e-3, "{report:?}");
}

#[test]
fn forced_adjacency_builds_full_tree() {
    let model = Model::new(small_config(), 1).unwrap();
    let code = vec![0.3; 4];
    let tree = model.decode_free_with(&code, 3, |_| NodeKind::Adjacency);
    assert_eq!(tree.len(), 7);
    assert_eq!(tree.census().leaves, 4);
    let tree = model.decode_free_with(&code, 3, |_| NodeKind::Leaf);
    assert_eq!(tree.len(), 1);
}
