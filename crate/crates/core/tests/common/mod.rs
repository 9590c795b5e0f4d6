//! Random instances and brute-force oracles shared by the property and
//! acceptance suites.
#![allow(dead_code)]

use nalgebra::{Rotation3, Unit};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use symh::symh::{NodeKind, Obb, SymhNode, SymhTree, SymmetryParam, Vec3};

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
    let axis = Unit::new_normalize(random_unit(rng));
    Rotation3::from_axis_angle(&axis, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v.normalize();
        }
    }
}

pub fn random_obb(rng: &mut ChaCha8Rng) -> Obb {
    let r = random_rotation(rng);
    let center = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let extents = Vec3::new(rng.random_range(0.05..2.0), rng.random_range(0.05..2.0), rng.random_range(0.05..2.0));
    Obb::new(center, extents, r * Vec3::x(), r * Vec3::y()).unwrap()
}

pub fn random_plane(rng: &mut ChaCha8Rng) -> SymmetryParam {
    let normal = random_unit(rng);
    // Store the plane point closest to the origin.
    let offset = rng.random_range(-1.0..1.0);
    SymmetryParam { normal, point: normal * offset }
}

/// Random valid tree with at most `depth` levels below the root.
pub fn random_tree(rng: &mut ChaCha8Rng, depth: usize) -> SymhTree {
    let stop = depth == 0 || rng.random_bool(0.3);
    if stop {
        return SymhTree::leaf(random_obb(rng));
    }
    if rng.random_bool(0.35) {
        SymhTree::symmetry(random_tree(rng, depth - 1), random_plane(rng))
    } else {
        SymhTree::adjacency(random_tree(rng, depth - 1), random_tree(rng, depth - 1))
    }
}

/// Applies `p ↦ R p + t` to every box and plane.
pub fn transform_tree(tree: &SymhTree, r: &Rotation3<f64>, t: &Vec3) -> SymhTree {
    let nodes = tree
        .nodes()
        .iter()
        .map(|n| match n {
            SymhNode::Leaf(o) => SymhNode::Leaf(transform_obb(o, r, t)),
            SymhNode::Symmetry(s) => SymhNode::Symmetry(SymmetryParam { normal: r * s.normal, point: r * s.point + t }),
            SymhNode::Adjacency => SymhNode::Adjacency,
        })
        .collect();
    SymhTree::from_nodes_unchecked(nodes)
}

pub fn transform_obb(o: &Obb, r: &Rotation3<f64>, t: &Vec3) -> Obb {
    Obb { center: r * o.center + t, extents: o.extents, axis1: r * o.axis1, axis2: r * o.axis2 }
}

/// Largest distance from a point of `a` to its closest point of `b`.
pub fn point_set_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().map(|p| b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
}

/// Hausdorff distance by explicit double loops.
pub fn brute_hausdorff(a: &[Vec3], b: &[Vec3]) -> f64 {
    let mut h = 0.0f64;
    for p in a {
        let mut m = f64::INFINITY;
        for q in b {
            m = m.min((p - q).norm());
        }
        h = h.max(m);
    }
    for q in b {
        let mut m = f64::INFINITY;
        for p in a {
            m = m.min((p - q).norm());
        }
        h = h.max(m);
    }
    h
}

/// 95th percentile of both directions' nearest distances, interpolating
/// linearly between order statistics at rank `0.95·(n−1)`.
pub fn brute_hausdorff95(a: &[Vec3], b: &[Vec3]) -> f64 {
    let mut d = Vec::new();
    for (x, y) in [(a, b), (b, a)] {
        for p in x {
            let mut m = f64::INFINITY;
            for q in y {
                m = m.min((p - q).norm());
            }
            d.push(m);
        }
    }
    d.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let rank = 0.95 * (d.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 < d.len() {
        d[lo] + (d[lo + 1] - d[lo]) * frac
    } else {
        d[lo]
    }
}

/// Pointer-style tree used by the structural oracle.
#[derive(Debug, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub children: Vec<Node>,
}

pub fn nested(tree: &SymhTree) -> Node {
    fn build(nodes: &[SymhNode], i: &mut usize) -> Node {
        let kind = nodes[*i].kind();
        *i += 1;
        let children = (0..kind.arity()).map(|_| build(nodes, i)).collect();
        Node { kind, children }
    }
    build(tree.nodes(), &mut 0)
}

fn size(n: &Node) -> usize {
    1 + n.children.iter().map(size).sum::<usize>()
}

fn matched(a: &Node, b: &Node) -> usize {
    if a == b {
        size(a)
    } else if a.kind == b.kind {
        a.children.iter().zip(&b.children).map(|(x, y)| matched(x, y)).sum()
    } else {
        0
    }
}

/// Subtree matching score by recursive structural equality.
pub fn oracle_sms(a: &SymhTree, b: &SymhTree) -> f64 {
    matched(&nested(a), &nested(b)) as f64 / a.len().max(b.len()) as f64
}

/// Cheapest assignment of rows to columns by enumerating permutations.
pub fn brute_assignment(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                go(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    best
}

pub fn random_costs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..10.0)).collect()).collect()
}

pub fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
