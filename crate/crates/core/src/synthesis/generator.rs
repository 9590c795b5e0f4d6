//! Procedural aircraft generator.
//!
//! Aircraft are built in a canonical pose: nose along +x, up along +z, left
//! wing on +y. Every part is a sampled point set. Point sets are drawn in
//! mirrored pairs or quadruples about the part's own symmetry planes, so the
//! fitted boxes come out exactly axis-aligned where the shape is, and the
//! right-hand parts are exact mirror images of the left-hand ones.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::GenConfig;
use super::fit::fit_obb;
use crate::error::Result;
use crate::seed::rng_for;
use crate::symh::{SymmetryParam, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartLabel {
    Fuselage,
    WingLeft,
    WingRight,
    HstabLeft,
    HstabRight,
    Vstab,
    Engine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub label: PartLabel,
    pub points: Vec<Vec3>,
}

/// Parts of one aircraft. Order: fuselage, wing L/R, horizontal stabilizer
/// L/R, vertical stabilizer, then engines as (left, right) pairs from the
/// inside out.
#[derive(Debug, Clone, PartialEq)]
pub struct PartSet {
    pub parts: Vec<Part>,
    /// Bilateral mirror plane (x–z).
    pub plane: SymmetryParam,
}

impl PartSet {
    pub fn engine_count(&self) -> usize {
        self.parts.iter().filter(|p| p.label == PartLabel::Engine).count()
    }

    /// Applies `p ↦ scale·p + translation` to every point.
    pub fn scaled(&self, scale: f64, translation: &Vec3) -> PartSet {
        PartSet {
            parts: self
                .parts
                .iter()
                .map(|p| Part {
                    label: p.label,
                    points: p.points.iter().map(|q| q * scale + translation).collect(),
                })
                .collect(),
            plane: self.plane.scaled(scale, translation),
        }
    }
}

/// Deterministic in `(cfg, seed)`. The engine count is drawn from
/// `cfg.engine_counts`.
pub fn generate_aircraft(cfg: &GenConfig, seed: u64) -> Result<PartSet> {
    cfg.validate()?;
    let mut rng = rng_for(seed, "aircraft");
    let mut draw = |r: &super::config::Interval| r.lerp(rng.random::<f64>());

    let length = draw(&cfg.fuselage_length);
    let radius_y = draw(&cfg.fuselage_radius) * length;
    let radius_z = 1.12 * radius_y;
    let semispan = 0.5 * draw(&cfg.wing_span) * length;
    let root_chord = draw(&cfg.wing_chord) * length;
    let taper = draw(&cfg.wing_taper);
    let sweep = draw(&cfg.wing_sweep_deg).to_radians();
    let thickness = draw(&cfg.wing_thickness) * root_chord;
    let hstab_semispan = 0.5 * draw(&cfg.hstab_span) * length;
    let hstab_chord = draw(&cfg.hstab_chord) * length;
    let vstab_height = draw(&cfg.vstab_height) * length;
    let vstab_chord = draw(&cfg.vstab_chord) * length;
    let diameter = draw(&cfg.engine_diameter) * length;
    let offset = draw(&cfg.engine_offset);
    let engine_count = cfg.engine_counts[rng.random_range(0..cfg.engine_counts.len())];

    let n = cfg.points_per_part;
    let fuselage = Fuselage { length, radius_y, radius_z };

    let mut wing = Planform {
        root: Vec3::new(0.02 * length + 0.5 * root_chord, radius_y, -0.3 * radius_z),
        span: semispan - radius_y,
        root_chord,
        taper,
        sweep,
        thickness,
    };
    let tail_x = -0.5 * length;
    let hstab_root_y = 0.3 * fuselage.radius_scale(tail_x + 0.03 * length + hstab_chord) * radius_y;
    let hstab = Planform {
        root: Vec3::new(tail_x + 0.03 * length + hstab_chord, hstab_root_y, 0.0),
        span: hstab_semispan - hstab_root_y,
        root_chord: hstab_chord,
        taper: 0.5,
        sweep: sweep + 8f64.to_radians(),
        thickness: 0.08 * hstab_chord,
    };
    let vstab = Fin {
        root_le: Vec3::new(tail_x + 0.02 * length + vstab_chord, 0.0, 0.0),
        height: fuselage.radius_scale(tail_x + 0.02 * length) * radius_z + vstab_height,
        root_chord: vstab_chord,
        sweep: 40f64.to_radians(),
        thickness: 0.1 * vstab_chord,
    };

    let mut rng = rng_for(seed, "aircraft/points");
    let mut parts = Vec::with_capacity(6 + engine_count);
    parts.push(Part { label: PartLabel::Fuselage, points: fuselage.sample(&mut rng, n) });
    let mut wing_left = wing.sample(&mut rng, n);
    // A swept planform tilts its box, whose inner trailing corner can cross
    // the centerline; move the wing out until the box stays on its side.
    let inner = fit_obb(&wing_left)?.corners().iter().map(|c| c.y).fold(f64::INFINITY, f64::min);
    let shift = (0.25 * radius_y - inner).max(0.0);
    if shift > 0.0 {
        wing.root.y += shift;
        wing_left.iter_mut().for_each(|p| p.y += shift);
    }
    parts.push(Part { label: PartLabel::WingRight, points: mirror_y(&wing_left) });
    parts.insert(1, Part { label: PartLabel::WingLeft, points: wing_left });
    let hstab_left = hstab.sample(&mut rng, n);
    parts.push(Part { label: PartLabel::HstabLeft, points: hstab_left.clone() });
    parts.push(Part { label: PartLabel::HstabRight, points: mirror_y(&hstab_left) });
    parts.push(Part { label: PartLabel::Vstab, points: vstab.sample(&mut rng, n) });

    // Engine stations: clear of the fuselage and of each other.
    let margin = 0.06 * length;
    let inner_y = (offset * semispan).max(radius_y + 0.5 * diameter + margin);
    let mut stations = Vec::new();
    if engine_count >= 2 {
        stations.push((inner_y, diameter));
    }
    if engine_count == 4 {
        let outer_d = 0.85 * diameter;
        let outer_y = (inner_y + (0.28 * semispan).max(0.5 * (diameter + outer_d) + margin))
            .min(0.85 * semispan);
        stations.push((outer_y, outer_d));
    }
    for (y, d) in stations {
        let s = ((y - wing.root.y) / wing.span).clamp(0.0, 1.0);
        let (le, chord) = wing.leading_edge(s);
        let nacelle = Nacelle {
            center: Vec3::new(le - 0.35 * chord, y, wing.root.z - 0.5 * thickness - 0.8 * 0.56 * d),
            length: 2.4 * d,
            radius_y: 0.5 * d,
            radius_z: 0.56 * d,
        };
        let left = nacelle.sample(&mut rng, n);
        parts.push(Part { label: PartLabel::Engine, points: mirror_y(&left) });
        let idx = parts.len() - 1;
        parts.insert(idx, Part { label: PartLabel::Engine, points: left });
    }

    Ok(PartSet { parts, plane: SymmetryParam::bilateral() })
}

fn mirror_y(points: &[Vec3]) -> Vec<Vec3> {
    points.iter().map(|p| Vec3::new(p.x, -p.y, p.z)).collect()
}

fn quarter_angle(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>() * std::f64::consts::FRAC_PI_2
}

struct Fuselage {
    length: f64,
    radius_y: f64,
    radius_z: f64,
}

impl Fuselage {
    /// Cross-section scale at station `x`: elliptic nose cone over the front
    /// 12%, linear taper to 35% over the rear 30%.
    fn radius_scale(&self, x: f64) -> f64 {
        let u = (x / self.length + 0.5).clamp(0.0, 1.0);
        if u > 0.88 {
            let t = (u - 0.88) / 0.12;
            (1.0 - t * t).max(0.0).sqrt()
        } else if u < 0.3 {
            0.35 + 0.65 * u / 0.3
        } else {
            1.0
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(n + 4);
        // Both tips are included so the fitted length is exact.
        let half = 0.5 * self.length;
        for x in [half, -half] {
            let s = self.radius_scale(x);
            out.extend(quad_mirror(Vec3::new(x, s * self.radius_y, 0.0)));
        }
        while out.len() < n {
            let x = (rng.random::<f64>() - 0.5) * self.length;
            let theta = quarter_angle(rng);
            let s = self.radius_scale(x);
            out.extend(quad_mirror(Vec3::new(
                x,
                s * self.radius_y * theta.cos(),
                s * self.radius_z * theta.sin(),
            )));
        }
        out
    }
}

/// (x, ±y, ±z).
fn quad_mirror(p: Vec3) -> [Vec3; 4] {
    [
        Vec3::new(p.x, p.y, p.z),
        Vec3::new(p.x, -p.y, p.z),
        Vec3::new(p.x, p.y, -p.z),
        Vec3::new(p.x, -p.y, -p.z),
    ]
}

/// Horizontal lifting surface extending towards +y from `root` (the root
/// leading edge).
struct Planform {
    root: Vec3,
    span: f64,
    root_chord: f64,
    taper: f64,
    sweep: f64,
    thickness: f64,
}

impl Planform {
    /// Leading-edge x and local chord at span fraction `s`.
    fn leading_edge(&self, s: f64) -> (f64, f64) {
        let le = self.root.x - s * self.span * self.sweep.tan();
        let chord = self.root_chord * (1.0 - s * (1.0 - self.taper));
        (le, chord)
    }

    fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(n + 8);
        let push_pair = |s: f64, c: f64, u: f64, out: &mut Vec<Vec3>| {
            let (le, chord) = self.leading_edge(s);
            let x = le - c * chord;
            let y = self.root.y + s * self.span;
            let dz = 0.5 * u * self.thickness;
            out.push(Vec3::new(x, y, self.root.z + dz));
            out.push(Vec3::new(x, y, self.root.z - dz));
        };
        // Planform corners, top and bottom skin.
        for (s, c) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            push_pair(s, c, 1.0, &mut out);
        }
        while out.len() < n {
            let (s, c, u) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            push_pair(s, c, u, &mut out);
        }
        out
    }
}

/// Vertical fin on the centerline, rising from z = 0 (inside the fuselage).
struct Fin {
    root_le: Vec3,
    height: f64,
    root_chord: f64,
    sweep: f64,
    thickness: f64,
}

impl Fin {
    fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(n + 8);
        let push_pair = |q: f64, c: f64, u: f64, out: &mut Vec<Vec3>| {
            let le = self.root_le.x - q * self.height * self.sweep.tan();
            let chord = self.root_chord * (1.0 - 0.45 * q);
            let x = le - c * chord;
            let z = self.root_le.z + q * self.height;
            let dy = 0.5 * u * self.thickness;
            out.push(Vec3::new(x, dy, z));
            out.push(Vec3::new(x, -dy, z));
        };
        for (q, c) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            push_pair(q, c, 1.0, &mut out);
        }
        while out.len() < n {
            let (q, c, u) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            push_pair(q, c, u, &mut out);
        }
        out
    }
}

/// Elliptic cylinder along x.
struct Nacelle {
    center: Vec3,
    length: f64,
    radius_y: f64,
    radius_z: f64,
}

impl Nacelle {
    fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(n + 8);
        for x in [0.5 * self.length, -0.5 * self.length] {
            out.extend(quad_mirror(Vec3::new(x, self.radius_y, 0.0)).map(|p| p + self.center));
        }
        while out.len() < n {
            let x = (rng.random::<f64>() - 0.5) * self.length;
            let theta = quarter_angle(rng);
            let p = Vec3::new(x, self.radius_y * theta.cos(), self.radius_z * theta.sin());
            out.extend(quad_mirror(p).map(|p| p + self.center));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let cfg = GenConfig::default();
        assert_eq!(generate_aircraft(&cfg, 11).unwrap(), generate_aircraft(&cfg, 11).unwrap());
        assert_ne!(generate_aircraft(&cfg, 11).unwrap(), generate_aircraft(&cfg, 12).unwrap());
    }

    #[test]
    fn part_counts() {
        // 1 fuselage + 2 wings + 2 hstabs + 1 vstab + engines
        for (engines, parts) in [(0, 6), (2, 8), (4, 10)] {
            let cfg = GenConfig::default().with_engines(engines);
            let set = generate_aircraft(&cfg, 3).unwrap();
            assert_eq!(set.parts.len(), parts);
            assert_eq!(set.engine_count(), engines);
            assert!(set.parts.iter().all(|p| p.points.len() >= 32));
        }
    }

    #[test]
    fn mirror_symmetry_is_exact() {
        let set = generate_aircraft(&GenConfig::default().with_engines(4), 5).unwrap();
        let pairs = [(1, 2), (3, 4), (6, 7), (8, 9)];
        for (l, r) in pairs {
            let left = &set.parts[l].points;
            let right = &set.parts[r].points;
            assert_eq!(left.len(), right.len());
            for (a, b) in left.iter().zip(right) {
                assert_eq!(set.plane.reflect_point(a), *b);
            }
        }
        assert!(set.parts[1].points.iter().all(|p| p.y > 0.0));
    }
}
