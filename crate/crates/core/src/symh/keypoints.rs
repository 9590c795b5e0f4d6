use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::obb::Vec3;
use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Component category of a keypoint; the discriminant is the one-hot slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeypointType {
    Nose = 0,
    FuselageCenter = 1,
    Tail = 2,
    Engine = 3,
    WingVertexLeft = 4,
    WingVertexRight = 5,
}

impl KeypointType {
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn tag(self) -> &'static str {
        match self {
            KeypointType::Nose => "nose",
            KeypointType::FuselageCenter => "fuselage_center",
            KeypointType::Tail => "tail",
            KeypointType::Engine => "engine",
            KeypointType::WingVertexLeft => "wing_vertex_left",
            KeypointType::WingVertexRight => "wing_vertex_right",
        }
    }
}

/// 2D component keypoints of one aircraft in top view.
///
/// Wing quadrilaterals are ordered inner-leading, inner-trailing,
/// outer-trailing, outer-leading. "Left" is the positive side of the
/// tail→nose axis (positive cross product).
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointRecord {
    pub nose: Vec2,
    pub fuselage_center: Vec2,
    pub tail: Vec2,
    pub engines: Vec<Vec2>,
    pub left_wing: Option<[Vec2; 4]>,
    pub right_wing: Option<[Vec2; 4]>,
}

/// Similarity taking a record into its bounding square `[-1, 1]²`:
/// `p ↦ (p - center) / half`. In 3D the same scale applies to z, which is
/// not translated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub center: Vec2,
    pub half: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Self { center: Vec2::zeros(), half: 1.0 }
    }

    pub fn apply(&self, p: &Vec2) -> Vec2 {
        (p - self.center) / self.half
    }

    /// Forward map as `(scale, translation)` for 3D geometry.
    pub fn forward3(&self) -> (f64, Vec3) {
        let s = 1.0 / self.half;
        (s, Vec3::new(-self.center.x * s, -self.center.y * s, 0.0))
    }

    /// Inverse map as `(scale, translation)` for 3D geometry.
    pub fn inverse3(&self) -> (f64, Vec3) {
        (self.half, Vec3::new(self.center.x, self.center.y, 0.0))
    }
}

impl KeypointRecord {
    /// All keypoints with their categories in canonical order: nose,
    /// fuselage center, tail, engines, left wing, right wing.
    pub fn points(&self) -> Vec<(Vec2, KeypointType)> {
        let mut out = vec![
            (self.nose, KeypointType::Nose),
            (self.fuselage_center, KeypointType::FuselageCenter),
            (self.tail, KeypointType::Tail),
        ];
        out.extend(self.engines.iter().map(|e| (*e, KeypointType::Engine)));
        if let Some(w) = &self.left_wing {
            out.extend(w.iter().map(|p| (*p, KeypointType::WingVertexLeft)));
        }
        if let Some(w) = &self.right_wing {
            out.extend(w.iter().map(|p| (*p, KeypointType::WingVertexRight)));
        }
        out
    }

    /// Unit vector from tail to nose.
    pub fn axis(&self) -> Vec2 {
        let d = self.nose - self.tail;
        let n = d.norm();
        if n > 0.0 {
            d / n
        } else {
            Vec2::x()
        }
    }

    /// Signed distance of `p` from the tail→nose line; positive on the left.
    pub fn lateral_offset(&self, p: &Vec2) -> f64 {
        let a = self.axis();
        let r = p - self.tail;
        a.x * r.y - a.y * r.x
    }

    pub fn validate(&self) -> Result<()> {
        if self.points().iter().any(|(p, _)| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Keypoints("non-finite coordinate".into()));
        }
        if (self.nose - self.tail).norm() == 0.0 {
            return Err(Error::Keypoints("nose and tail coincide".into()));
        }
        for (quad, sign, name) in [(&self.left_wing, 1.0, "left"), (&self.right_wing, -1.0, "right")] {
            if let Some(q) = quad {
                if q.iter().any(|p| self.lateral_offset(p) * sign <= 0.0) {
                    return Err(Error::Keypoints(format!(
                        "{name} wing vertex lies on the wrong side of the fuselage axis"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn map_points(&self, mut f: impl FnMut(&Vec2) -> Vec2) -> Self {
        Self {
            nose: f(&self.nose),
            fuselage_center: f(&self.fuselage_center),
            tail: f(&self.tail),
            engines: self.engines.iter().map(&mut f).collect(),
            left_wing: self.left_wing.map(|q| q.map(|p| f(&p))),
            right_wing: self.right_wing.map(|q| q.map(|p| f(&p))),
        }
    }

    /// The similarity mapping this record's axis-aligned bounding square
    /// onto `[-1, 1]²`.
    pub fn normalization(&self) -> Normalization {
        let pts = self.points();
        let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
        for (p, _) in &pts {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let center = (lo + hi) * 0.5;
        let half = ((hi - lo) * 0.5).max();
        Normalization { center, half: if half > 0.0 { half } else { 1.0 } }
    }

    pub fn normalized(&self) -> (Self, Normalization) {
        let n = self.normalization();
        (self.map_points(|p| n.apply(p)), n)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RecordJson::from(self)).expect("record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RecordJson = serde_json::from_str(text).map_err(|e| Error::Keypoints(e.to_string()))?;
        raw.try_into()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Keypoints(msg) => Error::Keypoints(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct PointJson {
    #[serde(rename = "type")]
    kind: String,
    x: f64,
    y: f64,
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    nose: Option<PointJson>,
    fuselage_center: Option<PointJson>,
    tail: Option<PointJson>,
    #[serde(default)]
    engines: Vec<PointJson>,
    #[serde(default)]
    left_wing: Option<Vec<PointJson>>,
    #[serde(default)]
    right_wing: Option<Vec<PointJson>>,
}

impl PointJson {
    fn new(p: &Vec2, kind: KeypointType) -> Self {
        Self { kind: kind.tag().to_string(), x: p.x, y: p.y }
    }

    fn check(&self, expected: KeypointType) -> Result<Vec2> {
        if self.kind != expected.tag() {
            return Err(Error::Keypoints(format!(
                "expected type `{}`, found `{}`",
                expected.tag(),
                self.kind
            )));
        }
        Ok(Vec2::new(self.x, self.y))
    }
}

impl From<&KeypointRecord> for RecordJson {
    fn from(r: &KeypointRecord) -> Self {
        let quad = |q: &Option<[Vec2; 4]>, t| q.map(|q| q.iter().map(|p| PointJson::new(p, t)).collect());
        RecordJson {
            nose: Some(PointJson::new(&r.nose, KeypointType::Nose)),
            fuselage_center: Some(PointJson::new(&r.fuselage_center, KeypointType::FuselageCenter)),
            tail: Some(PointJson::new(&r.tail, KeypointType::Tail)),
            engines: r.engines.iter().map(|e| PointJson::new(e, KeypointType::Engine)).collect(),
            left_wing: quad(&r.left_wing, KeypointType::WingVertexLeft),
            right_wing: quad(&r.right_wing, KeypointType::WingVertexRight),
        }
    }
}

impl TryFrom<RecordJson> for KeypointRecord {
    type Error = Error;

    fn try_from(raw: RecordJson) -> Result<Self> {
        let required = |p: Option<PointJson>, t: KeypointType| {
            p.ok_or_else(|| Error::Keypoints(format!("missing `{}`", t.tag())))?.check(t)
        };
        let quad = |q: Option<Vec<PointJson>>, t: KeypointType| -> Result<Option<[Vec2; 4]>> {
            let Some(q) = q else { return Ok(None) };
            if q.len() != 4 {
                return Err(Error::Keypoints(format!("wing has {} vertices, expected 4", q.len())));
            }
            let pts = q.iter().map(|p| p.check(t)).collect::<Result<Vec<_>>>()?;
            Ok(Some([pts[0], pts[1], pts[2], pts[3]]))
        };
        let record = KeypointRecord {
            nose: required(raw.nose, KeypointType::Nose)?,
            fuselage_center: required(raw.fuselage_center, KeypointType::FuselageCenter)?,
            tail: required(raw.tail, KeypointType::Tail)?,
            engines: raw
                .engines
                .iter()
                .map(|e| e.check(KeypointType::Engine))
                .collect::<Result<_>>()?,
            left_wing: quad(raw.left_wing, KeypointType::WingVertexLeft)?,
            right_wing: quad(raw.right_wing, KeypointType::WingVertexRight)?,
        };
        record.validate()?;
        Ok(record)
    }
}
