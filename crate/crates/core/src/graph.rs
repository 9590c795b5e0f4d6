//! Keypoint multi-graph with structure-wise and spatial-wise edge sets.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::symh::{KeypointRecord, KeypointType, Vec2};

/// Width of a node feature: 2 coordinates and a 6-way type one-hot.
pub const FEATURE_DIM: usize = 2 + KeypointType::COUNT;

/// A keypoint before graph construction. `slot` is the vertex position
/// inside its wing quadrilateral (0 and 1 are the inner vertices) and 0 for
/// every other type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphNode {
    pub pos: Vec2,
    pub kind: KeypointType,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiGraph {
    pub nodes: Vec<GraphNode>,
    /// Structure-wise edges `(i, j)` with `i < j`, sorted.
    pub structure_edges: Vec<(usize, usize)>,
    /// All unordered pairs `(i, j)`, `i < j`.
    pub spatial_edges: Vec<(usize, usize)>,
}

impl MultiGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn feature(&self, i: usize) -> [f64; FEATURE_DIM] {
        let n = &self.nodes[i];
        let mut f = [0.0; FEATURE_DIM];
        f[0] = n.pos.x;
        f[1] = n.pos.y;
        f[2 + n.kind.index()] = 1.0;
        f
    }

    /// Structure-wise neighbor lists.
    pub fn structure_neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for &(i, j) in &self.structure_edges {
            out[i].push(j);
            out[j].push(i);
        }
        out
    }

    /// Plain-text dump: one `node` line per keypoint, then one line per
    /// edge tagged `s` (structure) or `p` (spatial).
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "node {i} {} {:?} {:?}", n.kind.tag(), n.pos.x, n.pos.y);
        }
        for (i, j) in &self.structure_edges {
            let _ = writeln!(out, "s {i} {j}");
        }
        for (i, j) in &self.spatial_edges {
            let _ = writeln!(out, "p {i} {j}");
        }
        out
    }
}

/// Nodes of a record in canonical order, mapped into its bounding square.
pub fn record_nodes(rec: &KeypointRecord) -> Vec<GraphNode> {
    let norm = rec.normalization();
    let mut slots = [0usize; KeypointType::COUNT];
    rec.points()
        .into_iter()
        .map(|(p, kind)| {
            let slot = match kind {
                KeypointType::WingVertexLeft | KeypointType::WingVertexRight => {
                    let s = slots[kind.index()];
                    slots[kind.index()] += 1;
                    s
                }
                _ => 0,
            };
            GraphNode { pos: norm.apply(&p), kind, slot }
        })
        .collect()
}

/// Builds the multi-graph of a record after normalizing it to `[-1, 1]²`.
pub fn build_graph(rec: &KeypointRecord) -> Result<MultiGraph> {
    build_graph_from_nodes(record_nodes(rec))
}

/// Edge rules: nose and tail connect to the fuselage center; the fuselage
/// center connects to the two inner vertices of each wing; each engine
/// connects to all four vertices of the wing on its side, the side being the
/// sign of its offset from the tail→nose line.
pub fn build_graph_from_nodes(nodes: Vec<GraphNode>) -> Result<MultiGraph> {
    if nodes.iter().any(|n| !n.pos.x.is_finite() || !n.pos.y.is_finite()) {
        return Err(Error::Keypoints("non-finite keypoint coordinate".into()));
    }
    let find = |kind: KeypointType| nodes.iter().position(|n| n.kind == kind);
    let center = find(KeypointType::FuselageCenter)
        .ok_or_else(|| Error::Keypoints("record has no fuselage center".into()))?;
    let mut edges = Vec::new();
    for kind in [KeypointType::Nose, KeypointType::Tail] {
        if let Some(i) = find(kind) {
            edges.push((i, center));
        }
    }
    let side_of = |kind: KeypointType| -> Vec<usize> {
        (0..nodes.len()).filter(|&i| nodes[i].kind == kind).collect()
    };
    let left = side_of(KeypointType::WingVertexLeft);
    let right = side_of(KeypointType::WingVertexRight);
    for wing in [&left, &right] {
        for &i in wing.iter().filter(|&&i| nodes[i].slot < 2) {
            edges.push((i, center));
        }
    }
    let (nose, tail) = (find(KeypointType::Nose), find(KeypointType::Tail));
    let axis_from = tail.unwrap_or(center);
    let axis_to = nose.unwrap_or(center);
    let (a, b) = (nodes[axis_from].pos, nodes[axis_to].pos);
    let dir = if (b - a).norm() > 0.0 { (b - a).normalize() } else { Vec2::x() };
    for (i, n) in nodes.iter().enumerate().filter(|(_, n)| n.kind == KeypointType::Engine) {
        let r = n.pos - a;
        let offset = dir.x * r.y - dir.y * r.x;
        let wing = if offset > 0.0 {
            &left
        } else if offset < 0.0 {
            &right
        } else {
            continue;
        };
        edges.extend(wing.iter().map(|&j| (i, j)));
    }
    let mut structure_edges: Vec<(usize, usize)> =
        edges.into_iter().filter(|(i, j)| i != j).map(|(i, j)| (i.min(j), i.max(j))).collect();
    structure_edges.sort_unstable();
    structure_edges.dedup();
    let n = nodes.len();
    let spatial_edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    Ok(MultiGraph { nodes, structure_edges, spatial_edges })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(s: f64) -> [Vec2; 4] {
        [
            Vec2::new(0.1, 0.1 * s),
            Vec2::new(-0.2, 0.1 * s),
            Vec2::new(-0.4, 0.9 * s),
            Vec2::new(-0.25, 0.9 * s),
        ]
    }

    fn full_record() -> KeypointRecord {
        KeypointRecord {
            nose: Vec2::new(1.0, 0.0),
            fuselage_center: Vec2::zeros(),
            tail: Vec2::new(-1.0, 0.0),
            engines: vec![Vec2::new(-0.1, 0.4), Vec2::new(-0.1, -0.4)],
            left_wing: Some(quad(1.0)),
            right_wing: Some(quad(-1.0)),
        }
    }

    #[test]
    fn fuselage_only() {
        let rec = KeypointRecord {
            engines: vec![],
            left_wing: None,
            right_wing: None,
            ..full_record()
        };
        let g = build_graph(&rec).unwrap();
        assert_eq!((g.len(), g.structure_edges.len(), g.spatial_edges.len()), (3, 2, 3));
    }

    #[test]
    fn full_record_counts() {
        let g = build_graph(&full_record()).unwrap();
        assert_eq!(g.len(), 13);
        assert_eq!(g.structure_edges.len(), 14);
        assert_eq!(g.spatial_edges.len(), 78);
        // engine 3 (left) connects to the left wing vertices 5..9
        for j in 5..9 {
            assert!(g.structure_edges.contains(&(3, j)));
        }
        for j in 9..13 {
            assert!(g.structure_edges.contains(&(4, j)));
        }
    }

    #[test]
    fn dropped_engines_remove_only_engine_edges() {
        let full = build_graph(&full_record()).unwrap();
        let rec = KeypointRecord { engines: vec![], ..full_record() };
        let g = build_graph(&rec).unwrap();
        assert_eq!(g.structure_edges.len(), 6);
        // Indices shift by the two removed engines.
        let kept: Vec<(usize, usize)> = full
            .structure_edges
            .iter()
            .filter(|(i, j)| ![3, 4].contains(i) && ![3, 4].contains(j))
            .map(|&(i, j)| (if i > 4 { i - 2 } else { i }, if j > 4 { j - 2 } else { j }))
            .collect();
        assert_eq!(g.structure_edges, kept);
    }

    #[test]
    fn feature_layout() {
        let g = build_graph(&full_record()).unwrap();
        let f = g.feature(3);
        assert_eq!(&f[2..], &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(f[1], 0.4);
    }

    #[test]
    fn edge_list_dump() {
        let g = build_graph(&full_record()).unwrap();
        let text = g.to_edge_list();
        assert_eq!(text.lines().filter(|l| l.starts_with("s ")).count(), 14);
        assert_eq!(text.lines().filter(|l| l.starts_with("p ")).count(), 78);
        assert!(text.starts_with("node 0 nose 1.0 0.0\n"));
    }
}
