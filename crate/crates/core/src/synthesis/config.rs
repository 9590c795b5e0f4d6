use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn lerp(&self, u: f64) -> f64 {
        self.min + (self.max - self.min) * u
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(Error::Config(format!("{name}: empty interval [{}, {}]", self.min, self.max)));
        }
        if self.min <= 0.0 {
            return Err(Error::Config(format!("{name}: lower bound must be positive")));
        }
        Ok(())
    }
}

/// Parameter ranges of the procedural aircraft generator plus keypoint
/// degradation settings.
///
/// Lengths other than `fuselage_length` are ratios: to the fuselage length
/// unless noted otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub fuselage_length: Interval,
    pub fuselage_radius: Interval,
    pub wing_span: Interval,
    pub wing_chord: Interval,
    /// Tip chord over root chord.
    pub wing_taper: Interval,
    /// Leading-edge sweep in degrees.
    pub wing_sweep_deg: Interval,
    /// Over the wing root chord.
    pub wing_thickness: Interval,
    pub hstab_span: Interval,
    pub hstab_chord: Interval,
    pub vstab_height: Interval,
    pub vstab_chord: Interval,
    /// Engine counts drawn uniformly per aircraft; each must be 0, 2 or 4.
    pub engine_counts: Vec<usize>,
    pub engine_diameter: Interval,
    /// Lateral station of the (inner) engine pair as a fraction of the semispan.
    pub engine_offset: Interval,
    /// Standard deviation of the isotropic keypoint jitter.
    pub noise_sigma: f64,
    /// Independent drop probability per engine keypoint.
    pub engine_drop: f64,
    pub points_per_part: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            fuselage_length: Interval::new(25.0, 75.0),
            fuselage_radius: Interval::new(0.05, 0.07),
            wing_span: Interval::new(0.85, 1.15),
            wing_chord: Interval::new(0.11, 0.17),
            wing_taper: Interval::new(0.25, 0.45),
            wing_sweep_deg: Interval::new(5.0, 30.0),
            wing_thickness: Interval::new(0.06, 0.1),
            hstab_span: Interval::new(0.28, 0.38),
            hstab_chord: Interval::new(0.06, 0.09),
            vstab_height: Interval::new(0.1, 0.15),
            vstab_chord: Interval::new(0.08, 0.12),
            engine_counts: vec![0, 2, 4],
            engine_diameter: Interval::new(0.035, 0.055),
            engine_offset: Interval::new(0.3, 0.4),
            noise_sigma: 0.0,
            engine_drop: 0.0,
            points_per_part: 256,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("fuselage_length", &self.fuselage_length),
            ("fuselage_radius", &self.fuselage_radius),
            ("wing_span", &self.wing_span),
            ("wing_chord", &self.wing_chord),
            ("wing_taper", &self.wing_taper),
            ("wing_sweep_deg", &self.wing_sweep_deg),
            ("wing_thickness", &self.wing_thickness),
            ("hstab_span", &self.hstab_span),
            ("hstab_chord", &self.hstab_chord),
            ("vstab_height", &self.vstab_height),
            ("vstab_chord", &self.vstab_chord),
            ("engine_diameter", &self.engine_diameter),
            ("engine_offset", &self.engine_offset),
        ];
        for (name, r) in ranges {
            r.check(name)?;
        }
        if self.engine_counts.is_empty() || self.engine_counts.iter().any(|c| ![0, 2, 4].contains(c)) {
            return Err(Error::Config(format!(
                "engine_counts must be a non-empty subset of {{0, 2, 4}}, got {:?}",
                self.engine_counts
            )));
        }
        if self.wing_sweep_deg.max >= 60.0 {
            return Err(Error::Config("wing_sweep_deg must stay below 60".into()));
        }
        if !(0.0..=1.0).contains(&self.engine_drop) {
            return Err(Error::Config(format!("engine_drop {} outside [0, 1]", self.engine_drop)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma {} must be >= 0", self.noise_sigma)));
        }
        if self.points_per_part < 32 {
            return Err(Error::Config("points_per_part must be at least 32".into()));
        }
        Ok(())
    }

    pub fn with_engines(mut self, count: usize) -> Self {
        self.engine_counts = vec![count];
        self
    }
}
