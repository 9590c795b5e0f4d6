//! Rule-based refinement of decoded boxes from the input keypoints.

use nalgebra::{Matrix2, Rotation3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::symh::{reflect_obb, KeypointRecord, Obb, SymhTree, SymmetryParam, Vec2, Vec3};
use crate::synthesis::{detect_symmetry, model_diagonal, point_in_polygon, projected_rect, SYMMETRY_FRACTION};

/// Fuselage candidates must point within this angle of the x axis.
pub const FUSELAGE_MAX_ANGLE_DEG: f64 = 30.0;
/// Engines are smaller than this fraction of the fuselage volume.
pub const ENGINE_VOLUME_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Fuselage,
    WingLeft,
    WingRight,
    Engine,
    Other,
}

fn longest_axis(obb: &Obb) -> Vec3 {
    let axes = obb.axes();
    let mut k = 0;
    for i in 1..3 {
        if obb.extents[i] > obb.extents[k] {
            k = i;
        }
    }
    axes[k]
}

/// Roles of flattened boxes in canonical pose (nose +x, up +z).
///
/// The fuselage is the largest box whose longest axis is within 30° of x.
/// The wings are the mirrored pair (across x–z) reaching furthest sideways,
/// left being +y. Engines are the remaining boxes under 10% of the fuselage
/// volume whose top-view center lies inside a wing's footprint.
pub fn assign_roles(obbs: &[Obb]) -> Vec<Role> {
    let mut roles = vec![Role::Other; obbs.len()];
    let cos_max = FUSELAGE_MAX_ANGLE_DEG.to_radians().cos();
    let fuselage = (0..obbs.len())
        .filter(|&i| longest_axis(&obbs[i]).x.abs() >= cos_max)
        .max_by(|&a, &b| obbs[a].volume().total_cmp(&obbs[b].volume()).then(b.cmp(&a)));
    if let Some(f) = fuselage {
        roles[f] = Role::Fuselage;
    }
    if obbs.len() < 2 {
        return roles;
    }
    let tol = SYMMETRY_FRACTION * model_diagonal(obbs);
    let rel = detect_symmetry(obbs, &SymmetryParam::bilateral(), tol);
    let reach = |i: usize| obbs[i].corners().iter().map(|c| c.y.abs()).fold(0.0, f64::max);
    let wings = rel
        .pairs
        .iter()
        .filter(|(i, j)| roles[*i] == Role::Other && roles[*j] == Role::Other)
        .max_by(|a, b| reach(a.0).max(reach(a.1)).total_cmp(&reach(b.0).max(reach(b.1))).then(b.cmp(a)));
    let mut footprints = Vec::new();
    if let Some(&(i, j)) = wings {
        let (left, right) = if obbs[i].center.y >= obbs[j].center.y { (i, j) } else { (j, i) };
        roles[left] = Role::WingLeft;
        roles[right] = Role::WingRight;
        footprints.push(projected_rect(&obbs[left]));
        footprints.push(projected_rect(&obbs[right]));
    }
    if let Some(f) = fuselage {
        let limit = ENGINE_VOLUME_FRACTION * obbs[f].volume();
        for (i, o) in obbs.iter().enumerate() {
            let top = Vec2::new(o.center.x, o.center.y);
            if roles[i] == Role::Other && o.volume() < limit && footprints.iter().any(|q| point_in_polygon(&top, q)) {
                roles[i] = Role::Engine;
            }
        }
    }
    roles
}

/// Result of matching predicted engine centers to engine keypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(prediction, keypoint)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

/// Minimum-cost perfect matching on a square matrix (shortest augmenting
/// paths with potentials). Returns the column of each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let (mut delta, mut j1) = (inf, 0);
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0; n];
    for j in 1..=n {
        col[p[j] - 1] = j - 1;
    }
    col
}

fn total(cost: &[Vec<f64>], col: &[usize]) -> f64 {
    col.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Minimum-cost assignment that is lexicographically smallest among the
/// optima: rows in order take the smallest column that keeps the optimum.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let best = total(cost, &hungarian(cost));
    let big = cost.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs())) * (n as f64 + 1.0) + 1.0;
    let tol = 1e-9 * best.abs().max(1.0);
    let mut fixed: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        for j in 0..n {
            if fixed.iter().any(|f| *f == Some(j)) {
                continue;
            }
            let mut c = cost.to_vec();
            fixed[i] = Some(j);
            for (r, f) in fixed.iter().enumerate() {
                if let Some(fc) = f {
                    for k in 0..n {
                        if k != *fc {
                            c[r][k] = big;
                        }
                    }
                    for (rr, row) in c.iter_mut().enumerate() {
                        if rr != r {
                            row[*fc] = big;
                        }
                    }
                }
            }
            if total(cost, &hungarian(&c)) <= best + tol {
                break;
            }
            fixed[i] = None;
        }
    }
    fixed.into_iter().map(|f| f.expect("an optimal completion exists")).collect()
}

/// Matches predicted engine centers to engine keypoints by Euclidean
/// distance. Rectangular inputs are padded with 10× the largest distance.
pub fn match_engines(predicted: &[Vec2], keypoints: &[Vec2]) -> Assignment {
    let (r, c) = (predicted.len(), keypoints.len());
    let n = r.max(c);
    if r == 0 || c == 0 {
        return Assignment { pairs: Vec::new(), cost: 0.0 };
    }
    let dist: Vec<Vec<f64>> = predicted.iter().map(|p| keypoints.iter().map(|k| (p - k).norm()).collect()).collect();
    let max = dist.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let pad = if max > 0.0 { 10.0 * max } else { 1.0 };
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i < r && j < c { dist[i][j] } else { pad }).collect())
        .collect();
    let col = min_cost_assignment(&cost);
    let pairs: Vec<(usize, usize)> = (0..r).filter(|&i| col[i] < c).map(|i| (i, col[i])).collect();
    let cost = pairs.iter().map(|&(i, j)| dist[i][j]).sum();
    Assignment { pairs, cost }
}

/// Box rotated about the vertical through its center so that the top-view
/// direction of `axis` becomes `target` (or its opposite, whichever is the
/// smaller turn). Vertical components are unchanged.
fn yaw_align(obb: &Obb, axis: &Vec3, target: &Vec2) -> Obb {
    let current = Vec2::new(axis.x, axis.y);
    if current.norm() < 1e-12 || target.norm() < 1e-12 {
        return *obb;
    }
    let mut angle = target.y.atan2(target.x) - current.y.atan2(current.x);
    let pi = std::f64::consts::PI;
    while angle > pi / 2.0 {
        angle -= pi;
    }
    while angle < -pi / 2.0 {
        angle += pi;
    }
    let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), angle);
    Obb { center: obb.center, extents: obb.extents, axis1: rot * obb.axis1, axis2: rot * obb.axis2 }
}

fn axis_index(obb: &Obb, axis: &Vec3) -> usize {
    let axes = obb.axes();
    (0..3).max_by(|&a, &b| axes[a].dot(axis).abs().total_cmp(&axes[b].dot(axis).abs())).expect("three axes")
}

/// Fuselage from nose and tail: top-view center at their midpoint, long
/// axis along tail→nose, long extent their distance.
fn refine_fuselage(obb: &Obb, rec: &KeypointRecord) -> Obb {
    let dir = rec.nose - rec.tail;
    let long = longest_axis(obb);
    let k = axis_index(obb, &long);
    let mut out = yaw_align(obb, &long, &dir);
    let mid = (rec.nose + rec.tail) * 0.5;
    out.center.x = mid.x;
    out.center.y = mid.y;
    out.extents[k] = dir.norm().max(crate::symh::EXTENT_FLOOR);
    out
}

/// Principal directions of a quadrilateral and the vertex ranges along
/// them: `(centroid, major, major range, minor range)`.
fn quad_frame(q: &[Vec2; 4]) -> (Vec2, Vec2, f64, f64) {
    let c = q.iter().fold(Vec2::zeros(), |a, p| a + p) / 4.0;
    let mut cov = Matrix2::zeros();
    for p in q {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
    let major: Vec2 = eig.eigenvectors.column(k).into_owned().normalize();
    let minor = Vec2::new(-major.y, major.x);
    let range = |dir: &Vec2| {
        let (lo, hi) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let t = (p - c).dot(dir);
            (lo.min(t), hi.max(t))
        });
        hi - lo
    };
    // The midpoint of the range, not the vertex mean, centers the box.
    let shift = |dir: &Vec2| {
        let (lo, hi) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let t = (p - c).dot(dir);
            (lo.min(t), hi.max(t))
        });
        0.5 * (lo + hi)
    };
    let center = c + major * shift(&major) + minor * shift(&minor);
    (center, major, range(&major), range(&minor))
}

/// Wing from its quadrilateral: top-view center, in-plane edge directions
/// and in-plane extents.
fn refine_wing(obb: &Obb, quad: &[Vec2; 4]) -> Obb {
    let (center, major, len_major, len_minor) = quad_frame(quad);
    let axes = obb.axes();
    // The two axes with the largest top-view footprint span the planform.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let na = Vec2::new(axes[a].x, axes[a].y).norm();
        let nb = Vec2::new(axes[b].x, axes[b].y).norm();
        nb.total_cmp(&na).then(a.cmp(&b))
    });
    let (p, q) = (order[0], order[1]);
    let (long, short) = if obb.extents[p] >= obb.extents[q] { (p, q) } else { (q, p) };
    let mut out = yaw_align(obb, &axes[long], &major);
    out.center.x = center.x;
    out.center.y = center.y;
    out.extents[long] = len_major.max(crate::symh::EXTENT_FLOOR);
    out.extents[short] = len_minor.max(crate::symh::EXTENT_FLOOR);
    out
}

/// One leaf whose box was changed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafChange {
    pub node: usize,
    pub role: Role,
    pub before: [f64; 12],
    pub after: [f64; 12],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    /// Role of every flattened box, in flattening order.
    pub roles: Vec<Role>,
    pub changes: Vec<LeafChange>,
    /// Pairs of (flattened box index, engine keypoint index).
    pub engine_assignment: Option<Assignment>,
    pub notes: Vec<String>,
}

fn unreflect(obb: &Obb, reflections: &[SymmetryParam]) -> Obb {
    reflections.iter().rev().fold(*obb, |o, r| reflect_obb(&o, r))
}

/// Keeps the estimate made on the copy with the fewest reflections, so a
/// mirrored pair is refined on its canonical side only.
fn propose(slot: &mut Option<(usize, Obb)>, depth: usize, leaf_obb: Obb) {
    if slot.is_none_or(|(d, _)| depth < d) {
        *slot = Some((depth, leaf_obb));
    }
}

/// Refines fuselage, wing and engine leaves from the keypoints. Edits are
/// made on flattened boxes and mapped back through their reflections onto
/// the leaf, so mirrored copies stay exact mirrors.
pub fn refine(tree: &SymhTree, rec: &KeypointRecord) -> Result<(SymhTree, RefinementReport)> {
    let flat = tree.flatten_with_provenance()?;
    let obbs: Vec<Obb> = flat.iter().map(|f| f.obb).collect();
    let roles = assign_roles(&obbs);
    let mut notes = Vec::new();
    let mut estimates: Vec<Option<(usize, Obb)>> = vec![None; tree.len()];
    let mut leaf_role = vec![Role::Other; tree.len()];

    for (i, f) in flat.iter().enumerate() {
        let refined = match roles[i] {
            Role::Fuselage => Some(refine_fuselage(&f.obb, rec)),
            Role::WingLeft => rec.left_wing.as_ref().map(|q| refine_wing(&f.obb, q)),
            Role::WingRight => rec.right_wing.as_ref().map(|q| refine_wing(&f.obb, q)),
            _ => None,
        };
        if let Some(r) = refined {
            propose(&mut estimates[f.leaf], f.reflections.len(), unreflect(&r, &f.reflections));
            leaf_role[f.leaf] = roles[i];
        }
    }
    if roles.contains(&Role::WingLeft) && rec.left_wing.is_none() {
        notes.push("left wing keypoints missing; left wing rule skipped".into());
    }
    if roles.contains(&Role::WingRight) && rec.right_wing.is_none() {
        notes.push("right wing keypoints missing; right wing rule skipped".into());
    }

    let engine_idx: Vec<usize> = (0..flat.len()).filter(|&i| roles[i] == Role::Engine).collect();
    let engine_assignment = if rec.engines.is_empty() {
        if !engine_idx.is_empty() {
            notes.push("no engine keypoints; engine boxes left unchanged".into());
        }
        None
    } else if engine_idx.is_empty() {
        notes.push("no engine boxes found; engine keypoints unused".into());
        None
    } else {
        let centers: Vec<Vec2> = engine_idx.iter().map(|&i| Vec2::new(obbs[i].center.x, obbs[i].center.y)).collect();
        let a = match_engines(&centers, &rec.engines);
        for &(p, k) in &a.pairs {
            let f = &flat[engine_idx[p]];
            let mut moved = f.obb;
            moved.center.x = rec.engines[k].x;
            moved.center.y = rec.engines[k].y;
            propose(&mut estimates[f.leaf], f.reflections.len(), unreflect(&moved, &f.reflections));
            leaf_role[f.leaf] = Role::Engine;
        }
        Some(Assignment { pairs: a.pairs.iter().map(|&(p, k)| (engine_idx[p], k)).collect(), cost: a.cost })
    };

    let mut changes = Vec::new();
    let refined = tree.map_leaves(|node, obb| {
        let Some((_, after)) = estimates[node] else {
            return *obb;
        };
        changes.push(LeafChange { node, role: leaf_role[node], before: obb.to_code(), after: after.to_code() });
        after
    });
    Ok((refined, RefinementReport { roles, changes, engine_assignment, notes }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_assignment() {
        let col = min_cost_assignment(&[vec![0.1, 0.9], vec![0.8, 0.2]]);
        assert_eq!(col, vec![0, 1]);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let col = min_cost_assignment(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(col, vec![0, 1]);
    }

    #[test]
    fn rectangular_matching() {
        let a = match_engines(&[Vec2::new(0.0, 0.0)], &[Vec2::new(5.0, 0.0), Vec2::new(0.1, 0.0)]);
        assert_eq!(a.pairs, vec![(0, 1)]);
        assert!((a.cost - 0.1).abs() < 1e-12);
        let a = match_engines(&[Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)], &[Vec2::new(0.9, 0.0)]);
        assert_eq!(a.pairs, vec![(1, 0)]);
    }

    #[test]
    fn single_box_is_fuselage() {
        let o = Obb::axis_aligned(Vec3::zeros(), Vec3::new(3.0, 1.0, 1.0));
        assert_eq!(assign_roles(&[o]), vec![Role::Fuselage]);
    }
}
