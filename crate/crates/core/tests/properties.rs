mod common;

use common::*;
use nalgebra::Rotation3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symh::graph::{build_graph, build_graph_from_nodes, record_nodes};
use symh::metrics::{self, hausdorff_points, percentile};
use symh::model::{Model, ModelConfig};
use symh::postprocess::{hungarian, match_engines, min_cost_assignment};
use symh::symh::{
    flatten_tree, parse_tree, reflect_obb, serialize_tree, validate_tree, NodeKind, SymhNode, SymhTree, Vec2, Vec3,
};
use symh::synthesis::{
    contract_to_symh, detect_adjacency, detect_symmetry, fit_obb, generate_aircraft, model_diagonal, projected_rect,
    synthesize_sample, GenConfig, PartLabel, ADJACENCY_FRACTION, SYMMETRY_FRACTION,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn flatten_count(tree: &SymhTree) -> usize {
    fn go(n: &Node) -> usize {
        match n.kind {
            NodeKind::Leaf => 1,
            NodeKind::Adjacency => n.children.iter().map(go).sum(),
            NodeKind::Symmetry => 2 * go(&n.children[0]),
        }
    }
    go(&nested(tree))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reflection_is_an_involution(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (o, p) = (random_obb(&mut r), random_plane(&mut r));
        let back = reflect_obb(&reflect_obb(&o, &p), &p);
        for (a, b) in o.to_code().iter().zip(back.to_code()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn flatten_doubles_under_symmetry(seed in any::<u64>()) {
        let t = random_tree(&mut rng(seed), 5);
        prop_assert!(validate_tree(&t).is_empty());
        prop_assert_eq!(flatten_tree(&t).unwrap().len(), flatten_count(&t));
    }

    #[test]
    fn corners_commute_with_rigid_motion(seed in any::<u64>()) {
        let mut r = rng(seed);
        let o = random_obb(&mut r);
        let rot = random_rotation(&mut r);
        let t = Vec3::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
        let moved: Vec<Vec3> = transform_obb(&o, &rot, &t).corners().to_vec();
        let expected: Vec<Vec3> = o.corners().iter().map(|c| rot * c + t).collect();
        prop_assert!(point_set_distance(&moved, &expected) < 1e-9);
        prop_assert!(point_set_distance(&expected, &moved) < 1e-9);
    }

    #[test]
    fn text_round_trip(seed in any::<u64>()) {
        let t = random_tree(&mut rng(seed), 5);
        let text = serialize_tree(&t);
        let back = parse_tree(&text).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(serialize_tree(&back), text);
    }

    #[test]
    fn metric_symmetry_and_identity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b) = (random_tree(&mut r, 3), random_tree(&mut r, 3));
        prop_assert_eq!(metrics::hausdorff(&a, &b).unwrap(), metrics::hausdorff(&b, &a).unwrap());
        prop_assert_eq!(metrics::hausdorff95(&a, &b).unwrap(), metrics::hausdorff95(&b, &a).unwrap());
        prop_assert_eq!(metrics::voxel_iou(&a, &b, 16).unwrap(), metrics::voxel_iou(&b, &a, 16).unwrap());
        prop_assert_eq!(metrics::voxel_iou(&a, &a, 16).unwrap(), 1.0);
        prop_assert_eq!(metrics::hausdorff(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(metrics::sms(&a, &a), 1.0);
    }

    #[test]
    fn sms_matches_structural_oracle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b) = (random_tree(&mut r, 4), random_tree(&mut r, 4));
        prop_assert_eq!(metrics::sms(&a, &b), oracle_sms(&a, &b));
    }

    #[test]
    fn hausdorff_matches_double_loop(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..40);
        let m = r.random_range(1..40);
        let a: Vec<Vec3> = (0..n).map(|_| random_obb(&mut r).center).collect();
        let b: Vec<Vec3> = (0..m).map(|_| random_obb(&mut r).center).collect();
        prop_assert_eq!(hausdorff_points(&a, &b), brute_hausdorff(&a, &b));
        prop_assert_eq!(metrics::hausdorff95_points(&a, &b), brute_hausdorff95(&a, &b));
    }

    /// A rigid shift by `t` moves every corner by exactly `t`, and the
    /// extreme corner along the shift finds nothing closer.
    #[test]
    fn shifting_away_never_lowers_hausdorff(seed in any::<u64>()) {
        let mut r = rng(seed);
        let gt = random_tree(&mut r, 3);
        let dir = random_unit(&mut r);
        let mut last = 0.0;
        for k in 1..6 {
            let pred = transform_tree(&gt, &Rotation3::identity(), &(dir * (0.2 * k as f64)));
            let e = metrics::hausdorff(&pred, &gt).unwrap();
            prop_assert!(e >= last);
            last = e;
        }
    }

    #[test]
    fn assignment_is_optimal(seed in any::<u64>(), n in 1usize..=6) {
        let cost = random_costs(&mut rng(seed), n);
        let total = |col: &[usize]| col.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>();
        let best = brute_assignment(&cost);
        prop_assert!((total(&hungarian(&cost)) - best).abs() < 1e-9);
        let col = min_cost_assignment(&cost);
        prop_assert!((total(&col) - best).abs() < 1e-9);
        let mut sorted = col.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn engine_matching_handles_rectangles(seed in any::<u64>(), r in 0usize..5, c in 0usize..5) {
        let mut g = rng(seed);
        let pts = |g: &mut ChaCha8Rng, n| (0..n).map(|_| Vec2::new(g.random_range(-1.0..1.0), g.random_range(-1.0..1.0))).collect::<Vec<_>>();
        let (p, k) = (pts(&mut g, r), pts(&mut g, c));
        let a = match_engines(&p, &k);
        prop_assert_eq!(a.pairs.len(), r.min(c));
        let mut used: Vec<usize> = a.pairs.iter().map(|x| x.1).collect();
        used.sort_unstable();
        used.dedup();
        prop_assert_eq!(used.len(), r.min(c));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fit_is_rigidly_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        // Points filling a box with well separated extents.
        let points: Vec<Vec3> = (0..300)
            .map(|_| Vec3::new(r.random_range(-2.0..2.0), r.random_range(-1.0..1.0), r.random_range(-0.4..0.4)))
            .collect();
        let rot = random_rotation(&mut r);
        let t = Vec3::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0));
        let moved: Vec<Vec3> = points.iter().map(|p| rot * p + t).collect();
        let a: Vec<Vec3> = fit_obb(&points).unwrap().corners().iter().map(|c| rot * c + t).collect();
        let b = fit_obb(&moved).unwrap().corners().to_vec();
        prop_assert!(point_set_distance(&a, &b) < 1e-6);
        prop_assert!(point_set_distance(&b, &a) < 1e-6);
    }

    #[test]
    fn generator_mirror_is_exact(seed in any::<u64>()) {
        let parts = generate_aircraft(&GenConfig::default(), seed).unwrap();
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for p in &parts.parts {
            let side_y = p.points.iter().map(|q| q.y).sum::<f64>();
            let target = match p.label {
                PartLabel::WingLeft | PartLabel::HstabLeft => &mut left,
                PartLabel::WingRight | PartLabel::HstabRight => &mut right,
                PartLabel::Engine if side_y > 0.0 => &mut left,
                PartLabel::Engine => &mut right,
                _ => continue,
            };
            target.extend(p.points.iter().copied());
        }
        let mirrored: Vec<Vec3> = right.iter().map(|q| Vec3::new(q.x, -q.y, q.z)).collect();
        prop_assert_eq!(point_set_distance(&mirrored, &left), 0.0);
        prop_assert_eq!(point_set_distance(&left, &mirrored), 0.0);
    }

    #[test]
    fn contraction_keeps_every_part(seed in any::<u64>()) {
        let parts = generate_aircraft(&GenConfig::default(), seed).unwrap();
        let obbs: Vec<_> = parts.parts.iter().map(|p| fit_obb(&p.points).unwrap()).collect();
        let diag = model_diagonal(&obbs);
        let adjacency = detect_adjacency(&obbs, ADJACENCY_FRACTION * diag);
        let symmetry = detect_symmetry(&obbs, &parts.plane, SYMMETRY_FRACTION * diag);
        let tree = contract_to_symh(&obbs, &adjacency, &symmetry).unwrap();
        prop_assert_eq!(flatten_tree(&tree).unwrap().len(), parts.parts.len());
    }

    #[test]
    fn boxes_enclose_keypoints(index in 0usize..5000) {
        let s = synthesize_sample(&GenConfig::default(), index).unwrap();
        let rects: Vec<[Vec2; 4]> = flatten_tree(&s.tree).unwrap().iter().map(projected_rect).collect();
        let inside = |p: &Vec2| rects.iter().any(|q| dilated_contains(q, p, 1e-3));
        for (p, kind) in s.keypoints.points() {
            prop_assert!(inside(&p), "{kind:?} at {p} outside every box");
        }
    }

    #[test]
    fn graph_is_permutation_covariant(index in 0usize..5000, perm_seed in any::<u64>()) {
        let s = synthesize_sample(&GenConfig::default(), index).unwrap();
        let nodes = record_nodes(&s.keypoints);
        let g = build_graph_from_nodes(nodes.clone()).unwrap();
        let perm = shuffled(&mut rng(perm_seed), nodes.len());
        // Node i of the permuted graph is node perm[i] of the original.
        let h = build_graph_from_nodes(perm.iter().map(|&i| nodes[i]).collect()).unwrap();
        let map = |edges: &[(usize, usize)]| {
            let mut e: Vec<(usize, usize)> = edges
                .iter()
                .map(|&(i, j)| (perm[i].min(perm[j]), perm[i].max(perm[j])))
                .collect();
            e.sort_unstable();
            e
        };
        prop_assert_eq!(map(&h.structure_edges), g.structure_edges.clone());
        prop_assert_eq!(map(&h.spatial_edges), g.spatial_edges.clone());
    }

    #[test]
    fn normalization_is_idempotent(index in 0usize..5000, sigma in 0.0f64..0.05) {
        let s = synthesize_sample(&GenConfig::default(), index).unwrap();
        let noisy = symh::synthesis::perturb_keypoints(
            &s.keypoints,
            &GenConfig { noise_sigma: sigma, ..GenConfig::default() },
            index as u64,
        );
        let (once, _) = noisy.normalized();
        let (a, b) = (build_graph(&noisy).unwrap(), build_graph(&once).unwrap());
        for (x, y) in a.nodes.iter().zip(&b.nodes) {
            prop_assert!((x.pos - y.pos).norm() < 1e-12);
        }
    }
}

fn dilated_contains(q: &[Vec2; 4], p: &Vec2, margin: f64) -> bool {
    // Convex quadrilateral in either orientation: within `margin` of the
    // inner side of every edge.
    let c = (q[0] + q[1] + q[2] + q[3]) / 4.0;
    (0..4).all(|k| {
        let (a, b) = (q[k], q[(k + 1) % 4]);
        let e = b - a;
        let len = e.norm();
        if len == 0.0 {
            return true;
        }
        let side = |x: &Vec2| (e.x * (x.y - a.y) - e.y * (x.x - a.x)) / len;
        let inward = side(&c).signum();
        side(p) * inward >= -margin
    })
}

fn small_model(seed: u64) -> Model {
    Model::new(ModelConfig { d: 8, steps: 2, hidden: 12, max_depth: 6, ..ModelConfig::default() }, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn encoding_ignores_node_order(index in 0usize..5000, perm_seed in any::<u64>()) {
        let model = small_model(3);
        let s = synthesize_sample(&GenConfig::default(), index).unwrap();
        let nodes = record_nodes(&s.keypoints);
        let perm = shuffled(&mut rng(perm_seed), nodes.len());
        let a = model.encode_one(&build_graph_from_nodes(nodes.clone()).unwrap()).unwrap();
        let b = model.encode_one(&build_graph_from_nodes(perm.iter().map(|&i| nodes[i]).collect()).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn free_decoding_terminates_with_valid_trees(seed in any::<u64>(), scale in 0.1f64..20.0) {
        let model = small_model(seed % 7);
        let mut r = rng(seed);
        let code: Vec<f64> = (0..8).map(|_| scale * r.random_range(-1.0..1.0)).collect();
        let tree = model.decode_free(&code);
        prop_assert!(validate_tree(&tree).is_empty());
        fn depth(n: &Node) -> usize {
            1 + n.children.iter().map(depth).max().unwrap_or(0)
        }
        prop_assert!(depth(&nested(&tree)) <= model.cfg.max_depth + 1);
    }

    #[test]
    fn teacher_forcing_follows_the_census(seed in any::<u64>()) {
        let model = small_model(1);
        let mut r = rng(seed);
        let trees: Vec<SymhTree> = (0..3).map(|_| random_tree(&mut r, 4)).collect();
        let samples: Vec<_> = (0..3).map(|i| synthesize_sample(&GenConfig::default(), i).unwrap()).collect();
        let graphs: Vec<_> = samples.iter().map(|s| build_graph(&s.keypoints).unwrap()).collect();
        let mut tape = symh::model::Tape::new(&model.store);
        let batch = symh::model::GraphBatch::new(&graphs.iter().collect::<Vec<_>>(), &model.cfg.ablation).unwrap();
        let roots = model.encode(&mut tape, &batch, true);
        let out = model.decode_teacher_forced(&mut tape, roots, &trees.iter().collect::<Vec<_>>()).unwrap();
        let (cls, sym, obb) = out.counts(&tape);
        let total: usize = trees.iter().map(|t| t.len()).sum();
        let syms: usize = trees.iter().map(|t| t.nodes().iter().filter(|n| matches!(n, SymhNode::Symmetry(_))).count()).sum();
        let leaves: usize = trees.iter().map(|t| t.census().leaves).sum();
        prop_assert_eq!((cls, sym, obb), (total, syms, leaves));
    }
}

#[test]
fn percentile_of_sixteen_values() {
    let v: Vec<f64> = (1..=16).map(|k| 0.01 * k as f64).collect();
    // Rank 0.95·15 = 14.25 between 0.15 and 0.16.
    assert!((percentile(&v, 0.95) - 0.1525).abs() < 1e-12);
}

/// Sixteen points matched at distance 0.01 except one outlier at distance 1.
/// Pooling both directions gives 30 values of 0.01 and two of 1; rank
/// 0.95·31 = 29.45 falls between them.
#[test]
fn one_outlier_among_sixteen() {
    let gt: Vec<Vec3> = (0..16).map(|i| Vec3::new(10.0 * (i % 4) as f64, 10.0 * (i / 4) as f64, 0.0)).collect();
    let mut pred: Vec<Vec3> = gt.iter().map(|p| p + Vec3::new(0.01, 0.0, 0.0)).collect();
    pred[5] = gt[5] + Vec3::new(0.0, 0.0, 1.0);
    assert_eq!(hausdorff_points(&pred, &gt), 1.0);
    let h95 = metrics::hausdorff95_points(&pred, &gt);
    assert_eq!(h95, brute_hausdorff95(&pred, &gt));
    assert!((h95 - (0.01 + 0.45 * 0.99)).abs() < 1e-9, "{h95}");
}
