use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerance on unit length and orthogonality of stored directions.
pub const AXIS_TOLERANCE: f64 = 1e-6;

/// Smallest edge length an OBB may carry. Thin parts (wings, fins) stay
/// voxelizable.
pub const EXTENT_FLOOR: f64 = 1e-4;

/// Oriented bounding box stored as its 12-number code: center, edge lengths
/// and the first two edge directions. The third direction is always
/// `axis1 × axis2`, so the frame is right-handed by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: Vec3,
    /// Full edge lengths along `axis1`, `axis2`, `axis3`.
    pub extents: Vec3,
    pub axis1: Vec3,
    pub axis2: Vec3,
}

/// Reflection plane given by its unit normal and any point on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryParam {
    pub normal: Vec3,
    pub point: Vec3,
}

/// Cross product of two orthonormal directions.
pub fn obb_third_axis(axis1: &Vec3, axis2: &Vec3) -> Result<Vec3> {
    check_frame(axis1, axis2).map_err(Error::Geometry)?;
    Ok(axis1.cross(axis2))
}

fn check_frame(axis1: &Vec3, axis2: &Vec3) -> std::result::Result<(), String> {
    if !axis1.iter().chain(axis2.iter()).all(|v| v.is_finite()) {
        return Err("non-finite axis".into());
    }
    if (axis1.norm() - 1.0).abs() > AXIS_TOLERANCE {
        return Err(format!("axis1 has length {}", axis1.norm()));
    }
    if (axis2.norm() - 1.0).abs() > AXIS_TOLERANCE {
        return Err(format!("axis2 has length {}", axis2.norm()));
    }
    let dot = axis1.dot(axis2);
    if dot.abs() > AXIS_TOLERANCE {
        return Err(format!("axes are not orthogonal (dot = {dot})"));
    }
    Ok(())
}

impl Obb {
    /// Validating constructor. Extents below [`EXTENT_FLOOR`] are raised to it;
    /// negative or non-finite extents are rejected.
    pub fn new(center: Vec3, extents: Vec3, axis1: Vec3, axis2: Vec3) -> Result<Self> {
        if !center.iter().all(|v| v.is_finite()) {
            return Err(Error::Geometry("non-finite center".into()));
        }
        if !extents.iter().all(|e| e.is_finite() && *e >= 0.0) {
            return Err(Error::Geometry(format!("bad extents {:?}", extents.as_slice())));
        }
        check_frame(&axis1, &axis2).map_err(Error::Geometry)?;
        Ok(Self {
            center,
            extents: extents.map(|e| e.max(EXTENT_FLOOR)),
            axis1,
            axis2,
        })
    }

    pub fn axis_aligned(center: Vec3, extents: Vec3) -> Self {
        Self::new(center, extents, Vec3::x(), Vec3::y()).expect("axis-aligned box")
    }

    /// Builds a box from an unconstrained 12-number code (as produced by a
    /// regression head): directions are Gram-Schmidt orthonormalized and
    /// extents made positive. Degenerate directions fall back to the
    /// canonical basis.
    pub fn from_code(code: &[f64]) -> Self {
        assert!(code.len() >= 12, "OBB code needs 12 values");
        let sanitize = |v: f64| if v.is_finite() { v } else { 0.0 };
        let center = Vec3::new(sanitize(code[0]), sanitize(code[1]), sanitize(code[2]));
        let extents = Vec3::new(code[3], code[4], code[5]).map(|e| sanitize(e).abs().max(EXTENT_FLOOR));
        let raw1 = Vec3::new(code[6], code[7], code[8]).map(sanitize);
        let raw2 = Vec3::new(code[9], code[10], code[11]).map(sanitize);
        let (axis1, axis2) = orthonormalize(raw1, raw2);
        Self { center, extents, axis1, axis2 }
    }

    pub fn to_code(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out[0..3].copy_from_slice(self.center.as_slice());
        out[3..6].copy_from_slice(self.extents.as_slice());
        out[6..9].copy_from_slice(self.axis1.as_slice());
        out[9..12].copy_from_slice(self.axis2.as_slice());
        out
    }

    pub fn axis3(&self) -> Vec3 {
        self.axis1.cross(&self.axis2)
    }

    pub fn axes(&self) -> [Vec3; 3] {
        [self.axis1, self.axis2, self.axis3()]
    }

    /// Columns are the three edge directions.
    pub fn rotation(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&self.axes())
    }

    pub fn volume(&self) -> f64 {
        self.extents.x * self.extents.y * self.extents.z
    }

    pub fn corners(&self) -> [Vec3; 8] {
        obb_corners(self)
    }

    /// Point containment, with the boundary counted as inside.
    pub fn contains(&self, p: &Vec3) -> bool {
        let d = p - self.center;
        self.axes()
            .iter()
            .zip(self.extents.iter())
            .all(|(a, e)| d.dot(a).abs() <= 0.5 * e)
    }

    /// Applies `p ↦ rotation·p + translation`. `rotation` must be proper.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vec3) -> Self {
        Self {
            center: rotation * self.center + translation,
            extents: self.extents,
            axis1: rotation * self.axis1,
            axis2: rotation * self.axis2,
        }
    }

    /// Applies the similarity `p ↦ scale·p + translation` (scale > 0).
    pub fn scaled(&self, scale: f64, translation: &Vec3) -> Self {
        Self {
            center: self.center * scale + translation,
            extents: (self.extents * scale).map(|e| e.max(EXTENT_FLOOR)),
            axis1: self.axis1,
            axis2: self.axis2,
        }
    }

    /// Problems that break the type invariants, as human-readable strings
    /// tagged with the invariant name.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let code = self.to_code();
        if code.iter().any(|v| !v.is_finite()) {
            out.push(("finite", "OBB has non-finite parameters".to_string()));
            return out;
        }
        if self.extents.iter().any(|e| *e <= 0.0) {
            out.push(("extent", format!("non-positive extent {:?}", self.extents.as_slice())));
        }
        if let Err(msg) = check_frame(&self.axis1, &self.axis2) {
            out.push(("axes", msg));
        }
        out
    }

    /// Edge lengths sorted in descending order.
    pub fn sorted_extents(&self) -> [f64; 3] {
        let mut e = [self.extents.x, self.extents.y, self.extents.z];
        e.sort_by(|a, b| b.total_cmp(a));
        e
    }
}

/// The eight vertices `center ± Σ (extent_i / 2)·axis_i`, in binary sign order
/// (bit 0 flips axis1, bit 1 axis2, bit 2 axis3).
pub fn obb_corners(obb: &Obb) -> [Vec3; 8] {
    let [a1, a2, a3] = obb.axes();
    let h = obb.extents * 0.5;
    std::array::from_fn(|k| {
        let s = |bit: usize| if k >> bit & 1 == 1 { 1.0 } else { -1.0 };
        obb.center + a1 * (s(0) * h.x) + a2 * (s(1) * h.y) + a3 * (s(2) * h.z)
    })
}

pub(crate) fn orthonormalize(raw1: Vec3, raw2: Vec3) -> (Vec3, Vec3) {
    let eps = 1e-12;
    let axis1 = if raw1.norm() > eps { raw1.normalize() } else { Vec3::x() };
    let mut ortho = raw2 - axis1 * axis1.dot(&raw2);
    if ortho.norm() <= eps {
        // Pick the canonical direction least aligned with axis1.
        let mut best = Vec3::x();
        let mut best_dot = f64::INFINITY;
        for cand in [Vec3::x(), Vec3::y(), Vec3::z()] {
            let d = axis1.dot(&cand).abs();
            if d < best_dot {
                best_dot = d;
                best = cand;
            }
        }
        ortho = best - axis1 * axis1.dot(&best);
    }
    (axis1, ortho.normalize())
}

impl SymmetryParam {
    pub fn new(normal: Vec3, point: Vec3) -> Result<Self> {
        if !normal.iter().chain(point.iter()).all(|v| v.is_finite()) {
            return Err(Error::Geometry("non-finite symmetry plane".into()));
        }
        if (normal.norm() - 1.0).abs() > AXIS_TOLERANCE {
            return Err(Error::Geometry(format!("plane normal has length {}", normal.norm())));
        }
        Ok(Self { normal, point })
    }

    /// The aircraft's bilateral plane: x–z through the origin.
    pub fn bilateral() -> Self {
        Self { normal: Vec3::y(), point: Vec3::zeros() }
    }

    /// Builds a plane from an unconstrained 6-number code (normal then point).
    pub fn from_code(code: &[f64]) -> Self {
        assert!(code.len() >= 6, "symmetry code needs 6 values");
        let sanitize = |v: f64| if v.is_finite() { v } else { 0.0 };
        let n = Vec3::new(code[0], code[1], code[2]).map(sanitize);
        let normal = if n.norm() > 1e-12 { n.normalize() } else { Vec3::y() };
        let point = Vec3::new(code[3], code[4], code[5]).map(sanitize);
        Self { normal, point }
    }

    pub fn to_code(&self) -> [f64; 6] {
        let mut out = [0.0; 6];
        out[0..3].copy_from_slice(self.normal.as_slice());
        out[3..6].copy_from_slice(self.point.as_slice());
        out
    }

    pub fn reflect_point(&self, p: &Vec3) -> Vec3 {
        p - self.normal * (2.0 * (p - self.point).dot(&self.normal))
    }

    pub fn reflect_vector(&self, v: &Vec3) -> Vec3 {
        v - self.normal * (2.0 * v.dot(&self.normal))
    }

    /// Signed distance of `p` from the plane.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.point).dot(&self.normal)
    }

    pub fn scaled(&self, scale: f64, translation: &Vec3) -> Self {
        Self { normal: self.normal, point: self.point * scale + translation }
    }

    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.to_code().iter().any(|v| !v.is_finite()) {
            out.push(("finite", "symmetry plane has non-finite parameters".to_string()));
        } else if (self.normal.norm() - 1.0).abs() > AXIS_TOLERANCE {
            out.push(("normal", format!("plane normal has length {}", self.normal.norm())));
        }
        out
    }
}

/// Mirror image of `obb` across the plane. Reflection reverses orientation,
/// so the reflected `axis2` is negated to keep `axis1 × axis2` equal to the
/// reflected third axis.
pub fn reflect_obb(obb: &Obb, sym: &SymmetryParam) -> Obb {
    let a1 = sym.reflect_vector(&obb.axis1);
    let mut a2 = sym.reflect_vector(&obb.axis2);
    let a3 = sym.reflect_vector(&obb.axis3());
    if a1.cross(&a2).dot(&a3) < 0.0 {
        a2 = -a2;
    }
    Obb {
        center: sym.reflect_point(&obb.center),
        extents: obb.extents,
        axis1: a1,
        axis2: a2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    fn same_point_set(a: &[Vec3], b: &[Vec3], tol: f64) -> bool {
        a.len() == b.len()
            && a.iter().all(|p| b.iter().any(|q| close(p, q, tol)))
            && b.iter().all(|p| a.iter().any(|q| close(p, q, tol)))
    }

    #[test]
    fn third_axis_examples() {
        let z = obb_third_axis(&Vec3::x(), &Vec3::y()).unwrap();
        assert!(close(&z, &Vec3::z(), 1e-15));
        let x = obb_third_axis(&Vec3::y(), &Vec3::z()).unwrap();
        assert!(close(&x, &Vec3::x(), 1e-15));
        // (0.6,0.8,0) × (-0.8,0.6,0) = (0, 0, 0.36 + 0.64)
        let a = obb_third_axis(&Vec3::new(0.6, 0.8, 0.0), &Vec3::new(-0.8, 0.6, 0.0)).unwrap();
        assert!(close(&a, &Vec3::z(), 1e-15));
    }

    #[test]
    fn third_axis_rejects_bad_frames() {
        assert!(obb_third_axis(&Vec3::new(2.0, 0.0, 0.0), &Vec3::y()).is_err());
        assert!(obb_third_axis(&Vec3::x(), &Vec3::new(0.1, 1.0, 0.0).normalize()).is_err());
    }

    #[test]
    fn unit_cube_corners() {
        let cube = Obb::axis_aligned(Vec3::zeros(), Vec3::repeat(1.0));
        let expected: Vec<Vec3> = (0..8)
            .map(|k| {
                Vec3::new(
                    if k & 1 == 1 { 0.5 } else { -0.5 },
                    if k & 2 == 2 { 0.5 } else { -0.5 },
                    if k & 4 == 4 { 0.5 } else { -0.5 },
                )
            })
            .collect();
        assert!(same_point_set(&cube.corners(), &expected, 1e-15));

        let shifted = Obb::axis_aligned(Vec3::x(), Vec3::repeat(1.0));
        let moved: Vec<Vec3> = expected.iter().map(|p| p + Vec3::x()).collect();
        assert!(same_point_set(&shifted.corners(), &moved, 1e-15));

        let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2);
        let rotated = cube.transformed(rot.matrix(), &Vec3::zeros());
        assert!(same_point_set(&rotated.corners(), &expected, 1e-12));
    }

    #[test]
    fn reflect_simple() {
        let obb = Obb::new(Vec3::x(), Vec3::new(1.0, 2.0, 3.0), Vec3::x(), Vec3::y()).unwrap();
        let plane = SymmetryParam::new(Vec3::x(), Vec3::zeros()).unwrap();
        let r = reflect_obb(&obb, &plane);
        assert!(close(&r.center, &Vec3::new(-1.0, 0.0, 0.0), 1e-15));
        assert_eq!(r.extents, obb.extents);
        let back = reflect_obb(&r, &plane);
        for (a, b) in back.to_code().iter().zip(obb.to_code().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn reflect_tilted_matches_pointwise_reflection() {
        let rot = Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let obb = Obb::new(
            Vec3::new(0.4, -1.2, 0.9),
            Vec3::new(2.0, 0.7, 0.3),
            rot * Vec3::x(),
            rot * Vec3::y(),
        )
        .unwrap();
        let plane = SymmetryParam::new(Vec3::new(1.0, 1.0, 0.0).normalize(), Vec3::zeros()).unwrap();
        let reflected = reflect_obb(&obb, &plane);
        let expected: Vec<Vec3> = obb.corners().iter().map(|p| plane.reflect_point(p)).collect();
        assert!(same_point_set(&reflected.corners(), &expected, 1e-12));
        assert!(reflected.problems().is_empty());
    }

    #[test]
    fn from_code_orthonormalizes() {
        let obb = Obb::from_code(&[0.0, 0.0, 0.0, -1.0, 0.0, 2.0, 2.0, 0.1, 0.0, 0.0, 3.0, 0.0]);
        assert!(obb.problems().is_empty());
        assert!(obb.extents.iter().all(|e| *e >= EXTENT_FLOOR));
        let degenerate = Obb::from_code(&[0.0; 12]);
        assert!(degenerate.problems().is_empty());
    }

    #[test]
    fn construction_clamps_extents() {
        let obb = Obb::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 1e-7), Vec3::x(), Vec3::y()).unwrap();
        assert_eq!(obb.extents.y, EXTENT_FLOOR);
        assert_eq!(obb.extents.z, EXTENT_FLOOR);
        assert!(Obb::new(Vec3::zeros(), Vec3::new(-1.0, 1.0, 1.0), Vec3::x(), Vec3::y()).is_err());
    }
}
