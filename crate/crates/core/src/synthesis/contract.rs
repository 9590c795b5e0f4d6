use std::collections::BTreeSet;

use super::relations::SymmetryRelations;
use crate::error::{Error, Result};
use crate::symh::{Obb, SymhTree};

struct Group {
    tree: SymhTree,
    volume: f64,
    /// Smallest part index in the group; orders children and breaks ties.
    key: usize,
    members: Vec<usize>,
}

/// Builds a SYMH tree by graph contraction.
///
/// Each mirrored pair first collapses into a symmetry node over its
/// lower-index member. Then the adjacency edge whose endpoints have the
/// smallest combined box volume is contracted into an adjacency node, until
/// one node remains. Volume ties go to the lexicographically smallest
/// `(key, key)` pair; the lower-key group becomes the left child.
pub fn contract_to_symh(
    obbs: &[Obb],
    adjacency: &[(usize, usize)],
    symmetry: &SymmetryRelations,
) -> Result<SymhTree> {
    let n = obbs.len();
    if n == 0 {
        return Err(Error::Geometry("no parts to contract".into()));
    }
    let mut group_of: Vec<usize> = (0..n).collect();
    let mut groups: Vec<Option<Group>> = Vec::new();
    let mut paired = vec![None; n];
    for &(i, j) in &symmetry.pairs {
        let (lo, hi) = (i.min(j), i.max(j));
        paired[lo] = Some(hi);
        paired[hi] = Some(lo);
    }
    for i in 0..n {
        match paired[i] {
            Some(partner) if partner < i => group_of[i] = group_of[partner],
            Some(partner) => {
                group_of[i] = groups.len();
                groups.push(Some(Group {
                    tree: SymhTree::symmetry(SymhTree::leaf(obbs[i]), canonical_plane(symmetry)),
                    volume: obbs[i].volume() + obbs[partner].volume(),
                    key: i,
                    members: vec![i, partner],
                }));
            }
            None => {
                group_of[i] = groups.len();
                groups.push(Some(Group {
                    tree: SymhTree::leaf(obbs[i]),
                    volume: obbs[i].volume(),
                    key: i,
                    members: vec![i],
                }));
            }
        }
    }

    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &(i, j) in adjacency {
        let (a, b) = (group_of[i], group_of[j]);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }

    let mut alive = groups.iter().filter(|g| g.is_some()).count();
    while alive > 1 {
        let best = edges
            .iter()
            .map(|&(a, b)| {
                let (ga, gb) = (groups[a].as_ref().unwrap(), groups[b].as_ref().unwrap());
                let keys = (ga.key.min(gb.key), ga.key.max(gb.key));
                (ga.volume + gb.volume, keys, a, b)
            })
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let Some((_, _, a, b)) = best else {
            return Err(Error::Disconnected(components(&groups)));
        };
        let ga = groups[a].take().unwrap();
        let gb = groups[b].take().unwrap();
        let (left, right) = if ga.key < gb.key { (ga, gb) } else { (gb, ga) };
        let merged = Group {
            tree: SymhTree::adjacency(left.tree, right.tree),
            volume: left.volume + right.volume,
            key: left.key,
            members: left.members.into_iter().chain(right.members).collect(),
        };
        let id = groups.len();
        groups.push(Some(merged));
        edges = edges
            .into_iter()
            .filter_map(|(x, y)| {
                let x = if x == a || x == b { id } else { x };
                let y = if y == a || y == b { id } else { y };
                (x != y).then(|| (x.min(y), x.max(y)))
            })
            .collect();
        alive -= 1;
    }
    let root = groups.into_iter().flatten().next().expect("one group remains");
    Ok(root.tree)
}

/// The recorded plane uses the point on it closest to the origin, so the
/// code does not depend on which point the caller supplied.
fn canonical_plane(rel: &SymmetryRelations) -> crate::symh::SymmetryParam {
    let mut p = rel.plane;
    p.point = p.normal * p.normal.dot(&p.point);
    p
}

fn components(groups: &[Option<Group>]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = groups
        .iter()
        .flatten()
        .map(|g| {
            let mut m = g.members.clone();
            m.sort_unstable();
            m
        })
        .collect();
    out.sort();
    out
}
