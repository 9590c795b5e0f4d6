use crate::symh::{reflect_obb, Obb, SymmetryParam, Vec3};

/// Lower bound on the Euclidean distance between two boxes: the largest gap
/// between their projections over the 15 separating-axis candidates (face
/// normals of both boxes and pairwise edge cross products). Zero when the
/// boxes overlap. Exact whenever the closest features are separated along a
/// face normal, which covers touching and collinear arrangements.
pub fn separating_distance(a: &Obb, b: &Obb) -> f64 {
    let axes_a = a.axes();
    let axes_b = b.axes();
    let mut candidates: Vec<Vec3> = Vec::with_capacity(15);
    candidates.extend_from_slice(&axes_a);
    candidates.extend_from_slice(&axes_b);
    for u in &axes_a {
        for v in &axes_b {
            let c = u.cross(v);
            if c.norm() > 1e-9 {
                candidates.push(c.normalize());
            }
        }
    }
    let d = b.center - a.center;
    let radius = |obb: &Obb, axes: &[Vec3; 3], l: &Vec3| -> f64 {
        axes.iter().zip(obb.extents.iter()).map(|(ax, e)| 0.5 * e * ax.dot(l).abs()).sum()
    };
    candidates
        .iter()
        .map(|l| d.dot(l).abs() - radius(a, &axes_a, l) - radius(b, &axes_b, l))
        .fold(0.0, f64::max)
}

/// Unordered pairs `(i, j)`, `i < j`, whose boxes are within `eps`.
pub fn detect_adjacency(obbs: &[Obb], eps: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..obbs.len() {
        for j in i + 1..obbs.len() {
            if separating_distance(&obbs[i], &obbs[j]) <= eps {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryRelations {
    pub plane: SymmetryParam,
    /// Mirrored pairs `(i, j)` with `i < j`.
    pub pairs: Vec<(usize, usize)>,
    /// Boxes that are their own mirror image.
    pub self_symmetric: Vec<usize>,
}

fn mirror_match(reflected: &Obb, other: &Obb, tol: f64) -> Option<f64> {
    let dist = (reflected.center - other.center).norm();
    let ext = reflected
        .sorted_extents()
        .iter()
        .zip(other.sorted_extents().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    (dist <= tol && ext <= tol).then_some(dist)
}

/// Finds mirrored pairs and self-symmetric boxes under `plane`.
///
/// Pairing is greedy by center distance (ties broken by index order); each
/// index joins at most one pair, and self-symmetric boxes are not paired.
pub fn detect_symmetry(obbs: &[Obb], plane: &SymmetryParam, tol: f64) -> SymmetryRelations {
    let reflected: Vec<Obb> = obbs.iter().map(|o| reflect_obb(o, plane)).collect();
    let self_symmetric: Vec<usize> = (0..obbs.len())
        .filter(|&i| mirror_match(&reflected[i], &obbs[i], tol).is_some())
        .collect();
    let mut candidates = Vec::new();
    for i in 0..obbs.len() {
        for j in i + 1..obbs.len() {
            if let Some(d) = mirror_match(&reflected[i], &obbs[j], tol) {
                candidates.push((d, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used = vec![false; obbs.len()];
    for &i in &self_symmetric {
        used[i] = true;
    }
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used[i] && !used[j] {
            used[i] = true;
            used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    SymmetryRelations { plane: *plane, pairs, self_symmetric }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_at(x: f64) -> Obb {
        Obb::axis_aligned(Vec3::new(x, 0.0, 0.0), Vec3::repeat(1.0))
    }

    /// Brute-force distance between two axis-aligned boxes.
    fn aabb_distance(a: &Obb, b: &Obb) -> f64 {
        let mut sq = 0.0;
        for k in 0..3 {
            let gap = (a.center[k] - b.center[k]).abs() - 0.5 * (a.extents[k] + b.extents[k]);
            if gap > 0.0 {
                sq += gap * gap;
            }
        }
        f64::sqrt(sq)
    }

    #[test]
    fn adjacency_examples() {
        assert_eq!(detect_adjacency(&[cube_at(0.0), cube_at(1.0)], 0.01), vec![(0, 1)]);
        assert!(detect_adjacency(&[cube_at(0.0), cube_at(3.0)], 0.01).is_empty());
        let chain = [cube_at(0.0), cube_at(1.0), cube_at(2.0)];
        assert_eq!(detect_adjacency(&chain, 0.01), vec![(0, 1), (1, 2)]);
        for i in 0..3 {
            for j in 0..3 {
                let d = separating_distance(&chain[i], &chain[j]);
                assert!((d - aabb_distance(&chain[i], &chain[j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn separating_distance_is_lower_bound_for_rotated_boxes() {
        use nalgebra::Rotation3;
        let rot = Rotation3::from_euler_angles(0.3, 0.2, 0.9);
        let a = cube_at(0.0);
        let b = Obb::new(Vec3::new(2.5, 0.7, -0.3), Vec3::new(1.0, 0.5, 0.2), rot * Vec3::x(), rot * Vec3::y())
            .unwrap();
        let d = separating_distance(&a, &b);
        // Brute force over a dense sampling of both surfaces.
        let sample = |o: &Obb| {
            let mut pts = Vec::new();
            let steps = 12;
            for i in 0..=steps {
                for j in 0..=steps {
                    for k in 0..=steps {
                        let on_face = [i, j, k].iter().any(|&t| t == 0 || t == steps);
                        if !on_face {
                            continue;
                        }
                        let u = |t: usize, e: f64| (t as f64 / steps as f64 - 0.5) * e;
                        let [a1, a2, a3] = o.axes();
                        pts.push(
                            o.center + a1 * u(i, o.extents.x) + a2 * u(j, o.extents.y) + a3 * u(k, o.extents.z),
                        );
                    }
                }
            }
            pts
        };
        let (pa, pb) = (sample(&a), sample(&b));
        let brute = pa
            .iter()
            .flat_map(|p| pb.iter().map(move |q| (p - q).norm()))
            .fold(f64::INFINITY, f64::min);
        assert!(d > 0.0);
        assert!(d <= brute + 1e-9, "{d} > {brute}");
    }

    #[test]
    fn symmetry_examples() {
        let plane = SymmetryParam::bilateral();
        let wing = Obb::axis_aligned(Vec3::new(0.0, 2.0, 0.0), Vec3::new(1.0, 3.0, 0.1));
        let mirrored = reflect_obb(&wing, &plane);
        let fuselage = Obb::axis_aligned(Vec3::new(0.0, 0.0, 0.0), Vec3::new(6.0, 1.0, 1.0));
        let rel = detect_symmetry(&[fuselage, wing, mirrored], &plane, 0.05);
        assert_eq!(rel.pairs, vec![(1, 2)]);
        assert_eq!(rel.self_symmetric, vec![0]);

        let mut moved = mirrored;
        moved.center.x += 0.5;
        let rel = detect_symmetry(&[fuselage, wing, moved], &plane, 0.05);
        assert!(rel.pairs.is_empty());
    }
}
