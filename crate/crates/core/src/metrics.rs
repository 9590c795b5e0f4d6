//! Shape metrics between predicted and ground-truth trees: Hausdorff error
//! on box corners, its 95th percentile, voxel IoU and the subtree matching
//! score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symh::{flatten_tree, Obb, SymhTree, Vec3};

pub const DEFAULT_RESOLUTION: usize = 64;

fn corners(tree: &SymhTree) -> Result<Vec<Vec3>> {
    let obbs = flatten_tree(tree)?;
    if obbs.is_empty() {
        return Err(Error::Geometry("tree has no boxes".into()));
    }
    Ok(obbs.iter().flat_map(|o| o.corners()).collect())
}

fn diagonal(points: &[Vec3]) -> f64 {
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

/// Distance from each point of `a` to its nearest point of `b`.
pub fn directed_min_distances(a: &[Vec3], b: &[Vec3]) -> Vec<f64> {
    a.iter().map(|p| b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)).collect()
}

/// Symmetric Hausdorff distance of two point sets.
pub fn hausdorff_points(a: &[Vec3], b: &[Vec3]) -> f64 {
    let ab = directed_min_distances(a, b).into_iter().fold(0.0, f64::max);
    let ba = directed_min_distances(b, a).into_iter().fold(0.0, f64::max);
    ab.max(ba)
}

/// Percentile `q ∈ [0, 1]` with linear interpolation at index `q·(n−1)`
/// of the sorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// 95th percentile of the pooled nearest-neighbor distances of both
/// directions.
pub fn hausdorff95_points(a: &[Vec3], b: &[Vec3]) -> f64 {
    let mut d = directed_min_distances(a, b);
    d.extend(directed_min_distances(b, a));
    percentile(&d, 0.95)
}

/// Shared scale: the mean of the two corner-set diagonals, so both shapes
/// are measured at roughly unit diagonal and the result stays symmetric.
fn scale(a: &[Vec3], b: &[Vec3]) -> f64 {
    let s = 0.5 * (diagonal(a) + diagonal(b));
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Hausdorff error over flattened box corners, in units of the mean
/// bounding-box diagonal.
pub fn hausdorff(pred: &SymhTree, gt: &SymhTree) -> Result<f64> {
    let (a, b) = (corners(pred)?, corners(gt)?);
    Ok(hausdorff_points(&a, &b) / scale(&a, &b))
}

pub fn hausdorff95(pred: &SymhTree, gt: &SymhTree) -> Result<f64> {
    let (a, b) = (corners(pred)?, corners(gt)?);
    Ok(hausdorff95_points(&a, &b) / scale(&a, &b))
}

/// Occupancy of `obbs` on an `r³` grid spanning `[lo, hi]`, as a bitset.
fn voxelize(obbs: &[Obb], lo: &Vec3, hi: &Vec3, r: usize) -> Vec<u64> {
    let mut bits = vec![0u64; (r * r * r).div_ceil(64)];
    let size = (hi - lo) / r as f64;
    let center = |k: usize, i: usize| lo[k] + (i as f64 + 0.5) * size[k];
    for obb in obbs {
        let cs = obb.corners();
        let mut range = [(0usize, 0usize); 3];
        for k in 0..3 {
            let (mn, mx) = cs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(c[k]), b.max(c[k])));
            if size[k] <= 0.0 {
                range[k] = (0, r);
                continue;
            }
            let first = (((mn - lo[k]) / size[k] - 0.5).ceil().max(0.0)) as usize;
            let last = (((mx - lo[k]) / size[k] - 0.5).floor() + 1.0).clamp(0.0, r as f64) as usize;
            range[k] = (first.min(r), last);
        }
        for i in range[0].0..range[0].1 {
            for j in range[1].0..range[1].1 {
                for l in range[2].0..range[2].1 {
                    let p = Vec3::new(center(0, i), center(1, j), center(2, l));
                    if obb.contains(&p) {
                        let idx = (i * r + j) * r + l;
                        bits[idx / 64] |= 1 << (idx % 64);
                    }
                }
            }
        }
    }
    bits
}

/// Voxel IoU on an `r³` grid over the joint bounding box of both shapes.
pub fn voxel_iou(pred: &SymhTree, gt: &SymhTree, r: usize) -> Result<f64> {
    voxel_iou_obbs(&flatten_tree(pred)?, &flatten_tree(gt)?, r)
}

pub fn voxel_iou_obbs(a: &[Obb], b: &[Obb], r: usize) -> Result<f64> {
    if r < 16 {
        return Err(Error::Config(format!("voxel resolution must be at least 16, got {r}")));
    }
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for c in a.iter().chain(b).flat_map(|o| o.corners()) {
        lo = lo.inf(&c);
        hi = hi.sup(&c);
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::Geometry("cannot voxelize an empty box set".into()));
    }
    let (va, vb) = (voxelize(a, &lo, &hi, r), voxelize(b, &lo, &hi, r));
    let (mut inter, mut union) = (0u64, 0u64);
    for (x, y) in va.iter().zip(&vb) {
        inter += (x & y).count_ones() as u64;
        union += (x | y).count_ones() as u64;
    }
    if union == 0 {
        return Err(Error::Geometry("voxel union is empty".into()));
    }
    Ok(inter as f64 / union as f64)
}

fn matched_nodes(p: &SymhTree, pi: usize, g: &SymhTree, gi: usize) -> usize {
    let (pe, ge) = (p.subtree_end(pi).expect("valid tree"), g.subtree_end(gi).expect("valid tree"));
    let same_shape = pe - pi == ge - gi
        && p.nodes()[pi..pe].iter().zip(&g.nodes()[gi..ge]).all(|(a, b)| a.kind() == b.kind());
    if same_shape {
        return pe - pi;
    }
    if p.nodes()[pi].kind() != g.nodes()[gi].kind() {
        return 0;
    }
    let (pc, gc) = (p.children(pi).expect("valid tree"), g.children(gi).expect("valid tree"));
    pc.iter().zip(&gc).map(|(&a, &b)| matched_nodes(p, a, g, b)).sum()
}

/// Subtree matching score: nodes paired in lockstep from the roots whose
/// whole subtrees have identical node kinds, over the larger node count.
/// Descent stops below a pair of differing kinds.
pub fn sms(pred: &SymhTree, gt: &SymhTree) -> f64 {
    let denom = pred.len().max(gt.len());
    if denom == 0 {
        return 1.0;
    }
    if pred.is_empty() || gt.is_empty() {
        return 0.0;
    }
    matched_nodes(pred, 0, gt, 0) as f64 / denom as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalResult {
    pub e_h: f64,
    pub e_h95: f64,
    pub iou: f64,
    pub sms: f64,
}

pub fn evaluate(pred: &SymhTree, gt: &SymhTree, resolution: usize) -> Result<EvalResult> {
    Ok(EvalResult {
        e_h: hausdorff(pred, gt)?,
        e_h95: hausdorff95(pred, gt)?,
        iou: voxel_iou(pred, gt, resolution)?,
        sms: sms(pred, gt),
    })
}

/// Component-wise mean; zeros for an empty slice.
pub fn mean(results: &[EvalResult]) -> EvalResult {
    if results.is_empty() {
        return EvalResult::default();
    }
    let n = results.len() as f64;
    EvalResult {
        e_h: results.iter().map(|r| r.e_h).sum::<f64>() / n,
        e_h95: results.iter().map(|r| r.e_h95).sum::<f64>() / n,
        iou: results.iter().map(|r| r.iou).sum::<f64>() / n,
        sms: results.iter().map(|r| r.sms).sum::<f64>() / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symh::SymmetryParam;

    fn cube(x: f64) -> SymhTree {
        SymhTree::leaf(Obb::axis_aligned(Vec3::new(x, 0.0, 0.0), Vec3::repeat(1.0)))
    }

    #[test]
    fn translated_cube() {
        let (a, b) = (corners(&cube(0.0)).unwrap(), corners(&cube(0.1)).unwrap());
        assert!((hausdorff_points(&a, &b) - 0.1).abs() < 1e-12);
        assert_eq!(hausdorff(&cube(0.0), &cube(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn iou_cases() {
        assert_eq!(voxel_iou(&cube(0.0), &cube(0.0), 64).unwrap(), 1.0);
        assert_eq!(voxel_iou(&cube(0.0), &cube(3.0), 64).unwrap(), 0.0);
        let r = 64;
        let iou = voxel_iou(&cube(0.0), &cube(0.5), r).unwrap();
        assert!((iou - 1.0 / 3.0).abs() <= 2.0 / r as f64, "{iou}");
        assert!(voxel_iou(&cube(0.0), &cube(0.5), 8).is_err());
    }

    #[test]
    fn sms_cases() {
        let t = SymhTree::adjacency(cube(0.0), SymhTree::symmetry(cube(1.0), SymmetryParam::bilateral()));
        assert_eq!(sms(&t, &t), 1.0);
        assert_eq!(sms(&cube(0.0), &SymhTree::adjacency(cube(0.0), cube(1.0))), 0.0);
        // Right subtree differs: Leaf vs Symmetry(Leaf); the left leaf matches.
        let u = SymhTree::adjacency(cube(0.0), cube(1.0));
        assert_eq!(sms(&u, &t), 1.0 / 4.0);
    }

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.95), 9.5);
        assert_eq!(percentile(&[2.0], 0.95), 2.0);
    }
}
