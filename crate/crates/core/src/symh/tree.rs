use std::fmt;

use super::obb::{reflect_obb, Obb, SymmetryParam, Vec3};
use crate::error::{Error, Result};

/// Node category. The discriminants are the classifier's class indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Leaf = 0,
    Adjacency = 1,
    Symmetry = 2,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Leaf, NodeKind::Adjacency, NodeKind::Symmetry];

    pub fn arity(self) -> usize {
        match self {
            NodeKind::Leaf => 0,
            NodeKind::Adjacency => 2,
            NodeKind::Symmetry => 1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// One entry of the pre-order node list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymhNode {
    Leaf(Obb),
    Adjacency,
    Symmetry(SymmetryParam),
}

impl SymhNode {
    pub fn kind(&self) -> NodeKind {
        match self {
            SymhNode::Leaf(_) => NodeKind::Leaf,
            SymhNode::Adjacency => NodeKind::Adjacency,
            SymhNode::Symmetry(_) => NodeKind::Symmetry,
        }
    }
}

/// A symmetry hierarchy stored as its pre-order node list. Children of a node
/// follow it directly: an adjacency node is followed by its left then right
/// subtree, a symmetry node by its single child subtree.
#[derive(Debug, Clone, PartialEq)]
pub struct SymhTree {
    nodes: Vec<SymhNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Pre-order index of the offending node (or of the end of the list).
    pub node: usize,
    pub kind: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}: {}: {}", self.node, self.kind, self.detail)
    }
}

/// Node-type counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Census {
    pub leaves: usize,
    pub adjacency: usize,
    pub symmetry: usize,
}

impl Census {
    pub fn total(&self) -> usize {
        self.leaves + self.adjacency + self.symmetry
    }
}

/// A flattened OBB together with where it came from: the leaf node it was
/// produced by and the reflections applied to it, innermost first.
#[derive(Debug, Clone)]
pub struct FlatObb {
    pub obb: Obb,
    pub leaf: usize,
    pub reflections: Vec<SymmetryParam>,
}

impl SymhTree {
    pub fn leaf(obb: Obb) -> Self {
        Self { nodes: vec![SymhNode::Leaf(obb)] }
    }

    pub fn adjacency(left: SymhTree, right: SymhTree) -> Self {
        let mut nodes = Vec::with_capacity(1 + left.nodes.len() + right.nodes.len());
        nodes.push(SymhNode::Adjacency);
        nodes.extend(left.nodes);
        nodes.extend(right.nodes);
        Self { nodes }
    }

    pub fn symmetry(child: SymhTree, param: SymmetryParam) -> Self {
        let mut nodes = Vec::with_capacity(1 + child.nodes.len());
        nodes.push(SymhNode::Symmetry(param));
        nodes.extend(child.nodes);
        Self { nodes }
    }

    /// Wraps a pre-order list after checking every tree invariant.
    pub fn from_nodes(nodes: Vec<SymhNode>) -> Result<Self> {
        let tree = Self { nodes };
        let violations = validate_tree(&tree);
        if violations.is_empty() {
            Ok(tree)
        } else {
            Err(Error::InvalidTree(violations))
        }
    }

    /// Wraps a pre-order list without validation (parsers and fault
    /// injection). Use [`validate_tree`] before relying on its structure.
    pub fn from_nodes_unchecked(nodes: Vec<SymhNode>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &[SymhNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kinds(&self) -> Vec<NodeKind> {
        self.nodes.iter().map(SymhNode::kind).collect()
    }

    pub fn census(&self) -> Census {
        let mut c = Census::default();
        for n in &self.nodes {
            match n.kind() {
                NodeKind::Leaf => c.leaves += 1,
                NodeKind::Adjacency => c.adjacency += 1,
                NodeKind::Symmetry => c.symmetry += 1,
            }
        }
        c
    }

    /// One past the last index of the subtree rooted at `index`, or `None`
    /// when the list ends before the subtree is complete.
    pub fn subtree_end(&self, index: usize) -> Option<usize> {
        let mut pending = 1usize;
        let mut j = index;
        while pending > 0 {
            let node = self.nodes.get(j)?;
            pending = pending - 1 + node.kind().arity();
            j += 1;
        }
        Some(j)
    }

    /// Indices of the children of node `index` in order.
    pub fn children(&self, index: usize) -> Option<Vec<usize>> {
        let node = self.nodes.get(index)?;
        let mut out = Vec::with_capacity(2);
        let mut next = index + 1;
        for _ in 0..node.kind().arity() {
            if next >= self.nodes.len() {
                return None;
            }
            out.push(next);
            next = self.subtree_end(next)?;
        }
        Some(out)
    }

    /// Copy of the subtree rooted at `index`.
    pub fn subtree(&self, index: usize) -> Option<SymhTree> {
        let end = self.subtree_end(index)?;
        Some(Self { nodes: self.nodes[index..end].to_vec() })
    }

    pub fn leaf_obbs(&self) -> impl Iterator<Item = &Obb> {
        self.nodes.iter().filter_map(|n| match n {
            SymhNode::Leaf(o) => Some(o),
            _ => None,
        })
    }

    pub fn map_leaves(&self, mut f: impl FnMut(usize, &Obb) -> Obb) -> SymhTree {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| match n {
                SymhNode::Leaf(o) => SymhNode::Leaf(f(i, o)),
                other => *other,
            })
            .collect();
        Self { nodes }
    }

    /// Applies the similarity `p ↦ scale·p + translation` to all geometry.
    pub fn scaled(&self, scale: f64, translation: &Vec3) -> SymhTree {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n {
                SymhNode::Leaf(o) => SymhNode::Leaf(o.scaled(scale, translation)),
                SymhNode::Symmetry(s) => SymhNode::Symmetry(s.scaled(scale, translation)),
                SymhNode::Adjacency => SymhNode::Adjacency,
            })
            .collect();
        Self { nodes }
    }

    /// Every OBB of the shape with provenance, in pre-order. A symmetry node
    /// contributes its child's OBBs followed by their mirror images.
    pub fn flatten_with_provenance(&self) -> Result<Vec<FlatObb>> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidTree(vec![Violation {
                node: 0,
                kind: "empty",
                detail: "tree has no nodes".into(),
            }]));
        }
        let (out, end) = self.flatten_at(0)?;
        if end != self.nodes.len() {
            return Err(Error::InvalidTree(vec![trailing(end, self.nodes.len())]));
        }
        Ok(out)
    }

    fn flatten_at(&self, index: usize) -> Result<(Vec<FlatObb>, usize)> {
        let node = self.nodes.get(index).ok_or_else(|| {
            Error::InvalidTree(vec![Violation {
                node: index,
                kind: "arity",
                detail: "node list ends before all children are present".into(),
            }])
        })?;
        match node {
            SymhNode::Leaf(obb) => Ok((
                vec![FlatObb { obb: *obb, leaf: index, reflections: Vec::new() }],
                index + 1,
            )),
            SymhNode::Adjacency => {
                let (mut left, mid) = self.flatten_at(index + 1)?;
                let (right, end) = self.flatten_at(mid)?;
                left.extend(right);
                Ok((left, end))
            }
            SymhNode::Symmetry(param) => {
                let (child, end) = self.flatten_at(index + 1)?;
                let mirrored: Vec<FlatObb> = child
                    .iter()
                    .map(|f| {
                        let mut reflections = f.reflections.clone();
                        reflections.push(*param);
                        FlatObb { obb: reflect_obb(&f.obb, param), leaf: f.leaf, reflections }
                    })
                    .collect();
                let mut out = child;
                out.extend(mirrored);
                Ok((out, end))
            }
        }
    }
}

fn trailing(end: usize, len: usize) -> Violation {
    Violation {
        node: end,
        kind: "trailing",
        detail: format!("{} node(s) after the root subtree is complete", len - end),
    }
}

/// All OBBs of the shape in pre-order, with symmetry nodes expanded.
pub fn flatten_tree(tree: &SymhTree) -> Result<Vec<Obb>> {
    Ok(tree.flatten_with_provenance()?.into_iter().map(|f| f.obb).collect())
}

/// Checks every structural and geometric invariant and reports all
/// violations found.
pub fn validate_tree(tree: &SymhTree) -> Vec<Violation> {
    let nodes = tree.nodes();
    let mut out = Vec::new();
    if nodes.is_empty() {
        out.push(Violation { node: 0, kind: "empty", detail: "tree has no nodes".into() });
        return out;
    }
    for (i, node) in nodes.iter().enumerate() {
        let problems = match node {
            SymhNode::Leaf(obb) => obb.problems(),
            SymhNode::Symmetry(s) => s.problems(),
            SymhNode::Adjacency => Vec::new(),
        };
        out.extend(problems.into_iter().map(|(kind, detail)| Violation { node: i, kind, detail }));
    }
    // Structural walk: `open` holds (node index, children still missing).
    let mut open: Vec<(usize, usize)> = Vec::new();
    let mut root_done_at = None;
    for (i, node) in nodes.iter().enumerate() {
        if root_done_at.is_some() {
            break;
        }
        if let Some(top) = open.last_mut() {
            top.1 -= 1;
        }
        let arity = node.kind().arity();
        if arity > 0 {
            open.push((i, arity));
        }
        while let Some(&(_, 0)) = open.last() {
            open.pop();
        }
        if open.is_empty() {
            root_done_at = Some(i + 1);
        }
    }
    match root_done_at {
        Some(end) if end < nodes.len() => out.push(trailing(end, nodes.len())),
        Some(_) => {}
        None => {
            for (idx, missing) in open {
                let kind = nodes[idx].kind();
                out.push(Violation {
                    node: idx,
                    kind: "arity",
                    detail: format!(
                        "{kind:?} node has {} of {} children",
                        kind.arity() - missing,
                        kind.arity()
                    ),
                });
            }
        }
    }
    out.sort_by_key(|v| v.node);
    out
}
