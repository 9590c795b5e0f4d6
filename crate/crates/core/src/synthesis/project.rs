use super::fit::fit_obb;
use super::generator::{PartLabel, PartSet};
use crate::error::{Error, Result};
use crate::symh::{KeypointRecord, Obb, Vec2};

/// Convex hull (Andrew's monotone chain), counter-clockwise, without
/// repeated or collinear points.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vec2, a: &Vec2, b: &Vec2| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Minimum-area enclosing rectangle by rotating calipers: one side of the
/// optimum is collinear with a hull edge, so every edge direction is tried.
/// Returns the corners counter-clockwise.
pub fn min_bounding_rect(points: &[Vec2]) -> [Vec2; 4] {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        // Degenerate: segment or point.
        let a = hull.first().copied().unwrap_or_else(Vec2::zeros);
        let b = hull.last().copied().unwrap_or(a);
        return [a, b, b, a];
    }
    let mut best: Option<(f64, [Vec2; 4])> = None;
    for i in 0..hull.len() {
        let e = hull[(i + 1) % hull.len()] - hull[i];
        let len = e.norm();
        if len == 0.0 {
            continue;
        }
        let u = e / len;
        let v = Vec2::new(-u.y, u.x);
        let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let (a, b) = (p.dot(&u), p.dot(&v));
            lo_u = lo_u.min(a);
            hi_u = hi_u.max(a);
            lo_v = lo_v.min(b);
            hi_v = hi_v.max(b);
        }
        let area = (hi_u - lo_u) * (hi_v - lo_v);
        if best.as_ref().map_or(true, |(a, _)| area < *a) {
            let corner = |a: f64, b: f64| u * a + v * b;
            best = Some((
                area,
                [corner(lo_u, lo_v), corner(hi_u, lo_v), corner(hi_u, hi_v), corner(lo_u, hi_v)],
            ));
        }
    }
    best.expect("hull has edges").1
}

/// Top-down rectangle of a box: the minimum-area rectangle around its
/// projected corners.
pub fn projected_rect(obb: &Obb) -> [Vec2; 4] {
    let pts: Vec<Vec2> = obb.corners().iter().map(|c| Vec2::new(c.x, c.y)).collect();
    min_bounding_rect(&pts)
}

/// Fits a box to every part and derives the keypoint record from the
/// projected boxes.
pub fn project_keypoints(parts: &PartSet) -> Result<KeypointRecord> {
    let labels: Vec<PartLabel> = parts.parts.iter().map(|p| p.label).collect();
    let obbs = parts.parts.iter().map(|p| fit_obb(&p.points)).collect::<Result<Vec<_>>>()?;
    keypoints_from_obbs(&labels, &obbs)
}

/// Keypoints from labelled boxes in canonical pose (nose towards +x).
///
/// Nose and tail are the midpoints of the fuselage rectangle's short sides,
/// the fuselage center is its center, engines are rectangle centers, and each
/// wing contributes its rectangle's corners ordered inner-leading,
/// inner-trailing, outer-trailing, outer-leading. Stabilizers produce no
/// keypoints.
pub fn keypoints_from_obbs(labels: &[PartLabel], obbs: &[Obb]) -> Result<KeypointRecord> {
    let fuselage_idx = labels
        .iter()
        .position(|l| *l == PartLabel::Fuselage)
        .ok_or_else(|| Error::Keypoints("part set has no fuselage".into()))?;
    let rect = projected_rect(&obbs[fuselage_idx]);
    let center = rect.iter().fold(Vec2::zeros(), |a, p| a + p) / 4.0;
    let side_a = (rect[1] - rect[0]).norm();
    let side_b = (rect[2] - rect[1]).norm();
    // Midpoints of the two short sides.
    let (m1, m2) = if side_a >= side_b {
        ((rect[1] + rect[2]) * 0.5, (rect[3] + rect[0]) * 0.5)
    } else {
        ((rect[0] + rect[1]) * 0.5, (rect[2] + rect[3]) * 0.5)
    };
    let (nose, tail) = if m1.x >= m2.x { (m1, m2) } else { (m2, m1) };

    let mut record = KeypointRecord {
        nose,
        fuselage_center: center,
        tail,
        engines: Vec::new(),
        left_wing: None,
        right_wing: None,
    };
    for (label, obb) in labels.iter().zip(obbs) {
        match label {
            PartLabel::Engine => {
                let r = projected_rect(obb);
                record.engines.push(r.iter().fold(Vec2::zeros(), |a, p| a + p) / 4.0);
            }
            PartLabel::WingLeft => record.left_wing = Some(order_wing(&record, projected_rect(obb))),
            PartLabel::WingRight => record.right_wing = Some(order_wing(&record, projected_rect(obb))),
            _ => {}
        }
    }
    Ok(record)
}

/// Orders rectangle corners inner-leading, inner-trailing, outer-trailing,
/// outer-leading; "inner" means closer to the fuselage axis.
fn order_wing(record: &KeypointRecord, rect: [Vec2; 4]) -> [Vec2; 4] {
    let axis = record.axis();
    let mut idx = [0usize, 1, 2, 3];
    idx.sort_by(|&a, &b| {
        record
            .lateral_offset(&rect[a])
            .abs()
            .total_cmp(&record.lateral_offset(&rect[b]).abs())
            .then(a.cmp(&b))
    });
    let along = |k: usize| rect[k].dot(&axis);
    let (inner, outer) = ([idx[0], idx[1]], [idx[2], idx[3]]);
    let lead_first = |pair: [usize; 2]| {
        if along(pair[0]) >= along(pair[1]) {
            pair
        } else {
            [pair[1], pair[0]]
        }
    };
    let inner = lead_first(inner);
    let outer = lead_first(outer);
    [rect[inner[0]], rect[inner[1]], rect[outer[1]], rect[outer[0]]]
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: &Vec2, poly: &[Vec2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + n - 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}
