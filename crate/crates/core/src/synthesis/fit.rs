use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::symh::{Obb, Vec3};

/// PCA box fit.
///
/// Directions are covariance eigenvectors, each signed so its
/// largest-magnitude component is positive. The box spans the projected
/// range of the points along each direction, and directions are ordered
/// by descending extent (eigenvalue order breaks ties).
pub fn fit_obb(points: &[Vec3]) -> Result<Obb> {
    if points.len() < 4 {
        return Err(Error::Geometry(format!("need at least 4 points to fit a box, got {}", points.len())));
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    if !cov.iter().all(|v| v.is_finite()) {
        return Err(Error::Geometry("non-finite point coordinates".into()));
    }

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let largest = eig.eigenvalues[order[0]];
    if largest <= 0.0 || eig.eigenvalues[order[1]] <= 1e-12 * largest {
        return Err(Error::Geometry("points are collinear; covariance is rank-deficient".into()));
    }

    let mut frames: Vec<(Vec3, f64, f64)> = order
        .iter()
        .map(|&k| {
            let axis = sign_fixed(eig.eigenvectors.column(k).into_owned().normalize());
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let t = (p - mean).dot(&axis);
                (lo.min(t), hi.max(t))
            });
            (axis, lo, hi)
        })
        .collect();
    // Stable sort keeps eigenvalue order among equal extents.
    frames.sort_by(|a, b| (b.2 - b.1).total_cmp(&(a.2 - a.1)));

    let center = frames.iter().fold(mean, |c, (axis, lo, hi)| c + axis * (0.5 * (lo + hi)));
    let extents = Vec3::new(
        frames[0].2 - frames[0].1,
        frames[1].2 - frames[1].1,
        frames[2].2 - frames[2].1,
    );
    Obb::new(center, extents, frames[0].0, frames[1].0)
}

/// Flips `v` so that its largest-magnitude component (first on ties) is
/// positive.
pub(crate) fn sign_fixed(v: Vec3) -> Vec3 {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < 0.0 {
        -v
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn box_corners(ext: Vec3) -> Vec<Vec3> {
        Obb::axis_aligned(Vec3::zeros(), ext).corners().to_vec()
    }

    #[test]
    fn unit_cube() {
        let obb = fit_obb(&box_corners(Vec3::repeat(1.0))).unwrap();
        assert!((obb.extents - Vec3::repeat(1.0)).norm() < 1e-12);
        assert!(obb.center.norm() < 1e-12);
        for a in obb.axes() {
            // a signed permutation of the identity
            let big = a.iter().filter(|v| (v.abs() - 1.0).abs() < 1e-12).count();
            let zero = a.iter().filter(|v| v.abs() < 1e-12).count();
            assert_eq!((big, zero), (1, 2));
        }
    }

    #[test]
    fn box_4_2_1() {
        let obb = fit_obb(&box_corners(Vec3::new(4.0, 2.0, 1.0))).unwrap();
        assert!((obb.extents - Vec3::new(4.0, 2.0, 1.0)).norm() < 1e-12);
        assert!((obb.axis1 - Vec3::x()).norm() < 1e-12);
        assert!((obb.axis2 - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn rotated_box_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let rot = Rotation3::from_euler_angles(0.4, 1.1, -0.6);
        let ext = Vec3::new(3.0, 1.5, 0.5);
        let shift = Vec3::new(1.0, -2.0, 0.5);
        let pts: Vec<Vec3> = (0..1000)
            .map(|_| {
                let local = Vec3::new(
                    (rng.random::<f64>() - 0.5) * ext.x,
                    (rng.random::<f64>() - 0.5) * ext.y,
                    (rng.random::<f64>() - 0.5) * ext.z,
                );
                rot * local + shift
            })
            .collect();
        let obb = fit_obb(&pts).unwrap();
        for i in 0..3 {
            let rel = (obb.extents[i] - ext[i]).abs() / ext[i];
            assert!(rel < 0.05, "extent {i}: {} vs {}", obb.extents[i], ext[i]);
        }
        assert!(pts.iter().all(|p| {
            let d = p - obb.center;
            obb.axes().iter().zip(obb.extents.iter()).all(|(a, e)| d.dot(a).abs() <= 0.5 * e + 1e-9)
        }));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_obb(&[Vec3::zeros(), Vec3::x(), Vec3::y()]).is_err());
        let line: Vec<Vec3> = (0..10).map(|i| Vec3::x() * i as f64).collect();
        assert!(fit_obb(&line).is_err());
        // Planar sets are fine: the thin extent is clamped.
        let square: Vec<Vec3> = box_corners(Vec3::new(1.0, 1.0, 0.0));
        let obb = fit_obb(&square).unwrap();
        assert_eq!(obb.extents.z, crate::symh::EXTENT_FLOOR);
    }
}
