use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::geometry::{Ellipse, GlobeRotation, Vec2};

/// Iris semi-major axis (sim units) at which the globe has unit scale.
pub const NOMINAL_IRIS_SEMI_MAJOR: f64 = 0.36;
/// Projected globe radius (sim units) at unit scale.
pub const NOMINAL_GLOBE_RADIUS: f64 = 0.8;

pub const MAX_OPENING: f64 = FRAC_PI_2;
pub const MAX_BEND: f64 = FRAC_PI_3;

/// Surgical instrument identifier. Label id in rasters is `10 + id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ToolClass(pub u8);

impl ToolClass {
    pub const KERATOME: ToolClass = ToolClass(0);
    pub const VISCOELASTIC_CANNULA: ToolClass = ToolClass(1);
    pub const CAPSULORHEXIS_FORCEPS: ToolClass = ToolClass(2);
    pub const HYDRODISSECTION_CANNULA: ToolClass = ToolClass(3);
    pub const PHACO_HANDPIECE: ToolClass = ToolClass(4);

    pub const BUILTIN: [ToolClass; 5] = [
        Self::KERATOME,
        Self::VISCOELASTIC_CANNULA,
        Self::CAPSULORHEXIS_FORCEPS,
        Self::HYDRODISSECTION_CANNULA,
        Self::PHACO_HANDPIECE,
    ];

    /// Largest id whose label still fits in a byte.
    pub const MAX_ID: u8 = 245;

    pub fn label(self) -> u8 {
        10 + self.0
    }

    pub fn from_label(label: u8) -> Option<ToolClass> {
        (label >= 10).then(|| ToolClass(label - 10))
    }

    pub fn name(self) -> String {
        match self.0 {
            0 => "keratome".into(),
            1 => "viscoelastic_cannula".into(),
            2 => "capsulorhexis_forceps".into(),
            3 => "hydrodissection_cannula".into(),
            4 => "phaco_handpiece".into(),
            k => format!("tool_{k}"),
        }
    }

    /// Articulation model of the built-in instruments; custom ids default to straight.
    pub fn default_kind(self) -> ToolKind {
        match self.0 {
            1 | 3 => ToolKind::Angled,
            2 => ToolKind::Forceps,
            _ => ToolKind::Straight,
        }
    }
}

impl fmt::Display for ToolClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ToolClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(c) = Self::BUILTIN.iter().find(|c| c.name() == s) {
            return Ok(*c);
        }
        s.strip_prefix("tool_")
            .and_then(|k| k.parse::<u8>().ok())
            .filter(|&k| k <= Self::MAX_ID)
            .map(ToolClass)
            .ok_or_else(|| format!("unknown tool class `{s}`"))
    }
}

impl Serialize for ToolClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for ToolClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    Straight,
    Forceps,
    Angled,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Articulation {
    pub bend_angle: f64,
    pub opening_angle: f64,
}

impl Articulation {
    pub fn clamped(self) -> Self {
        Self {
            bend_angle: self.bend_angle.clamp(-MAX_BEND, MAX_BEND),
            opening_angle: self.opening_angle.clamp(0.0, MAX_OPENING),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.bend_angle.abs() <= MAX_BEND && (0.0..=MAX_OPENING).contains(&self.opening_angle)
    }
}

/// Pose of one instrument. `tip` is in sim units; `orientation` points from
/// the shaft toward the tip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolState {
    pub tool_class: ToolClass,
    pub tip: Vec2,
    pub orientation: f64,
    pub articulation: Articulation,
    pub present: bool,
}

impl ToolState {
    pub fn new(tool_class: ToolClass, tip: Vec2, orientation: f64) -> Self {
        Self {
            tool_class,
            tip,
            orientation,
            articulation: Articulation::default(),
            present: true,
        }
    }

    pub fn with_articulation(mut self, bend_angle: f64, opening_angle: f64) -> Self {
        self.articulation = Articulation {
            bend_angle,
            opening_angle,
        };
        self
    }

    /// Same kinematics, different presence flag.
    pub fn kinematics_eq(&self, other: &ToolState) -> bool {
        self.tool_class == other.tool_class
            && self.tip == other.tip
            && self.orientation.to_bits() == other.orientation.to_bits()
            && self.articulation == other.articulation
    }

    pub fn is_valid(&self) -> bool {
        self.tip.is_finite()
            && (-std::f64::consts::PI..std::f64::consts::PI).contains(&self.orientation)
            && self.articulation.is_valid()
    }
}

/// Anatomical configuration of the eye.
///
/// `iris` and `pupil` are stored relative to the globe centre at rest; their
/// rendered position adds `globe_translation` and the rotation displacement
/// `iris.a · (sin yaw, -sin pitch)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnatomyState {
    /// Globe centre in sim space.
    pub globe_translation: Vec2,
    pub globe_rotation: GlobeRotation,
    pub iris: Ellipse,
    pub pupil: Ellipse,
}

impl AnatomyState {
    /// A centred eye with nominal iris and pupil sizes.
    pub fn nominal() -> Self {
        Self {
            globe_translation: Vec2::ZERO,
            globe_rotation: GlobeRotation::default(),
            iris: Ellipse::new(0.0, 0.0, 0.0, NOMINAL_IRIS_SEMI_MAJOR, 0.35),
            pupil: Ellipse::new(0.0, 0.0, 0.0, 0.16, 0.155),
        }
    }

    /// Anatomical scaling factor of the globe.
    pub fn globe_scale(&self) -> f64 {
        self.iris.a / NOMINAL_IRIS_SEMI_MAJOR
    }

    pub fn globe_radius(&self) -> f64 {
        NOMINAL_GLOBE_RADIUS * self.globe_scale()
    }

    pub fn rotation_displacement(&self) -> Vec2 {
        self.globe_rotation.displacement(self.iris.a)
    }

    /// Point that the anterior segment (iris, pupil, engaged tools) moves with.
    pub fn anchor(&self) -> Vec2 {
        self.globe_translation + self.rotation_displacement()
    }

    pub fn world_iris(&self) -> Ellipse {
        self.iris.with_center(self.anchor() + self.iris.center())
    }

    pub fn world_pupil(&self) -> Ellipse {
        self.pupil.with_center(self.anchor() + self.pupil.center())
    }

    /// First violated invariant, if any.
    pub fn violation(&self) -> Option<&'static str> {
        if !self.globe_translation.is_finite() {
            return Some("globe_translation");
        }
        if !self.globe_rotation.is_valid() {
            return Some("globe_rotation");
        }
        if !self.iris.is_valid() {
            return Some("iris");
        }
        if !self.pupil.is_valid() {
            return Some("pupil");
        }
        if self.pupil.a > self.iris.a || self.pupil.b > self.iris.b {
            return Some("pupil.axes");
        }
        if !self.iris.contains(self.pupil.cx, self.pupil.cy) {
            return Some("pupil.centroid");
        }
        None
    }
}

/// Surgical phase label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Phase {
    Idle,
    Incision,
    Viscoelastic,
    Capsulorhexis,
    Hydrodissection,
    Phacoemulsification,
    Other(String),
}

impl Phase {
    pub fn as_str(&self) -> &str {
        match self {
            Phase::Idle => "idle",
            Phase::Incision => "incision",
            Phase::Viscoelastic => "viscoelastic",
            Phase::Capsulorhexis => "capsulorhexis",
            Phase::Hydrodissection => "hydrodissection",
            Phase::Phacoemulsification => "phacoemulsification",
            Phase::Other(s) => s,
        }
    }

    /// Phase a lone instrument of this class usually belongs to.
    pub fn for_tool(class: ToolClass) -> Phase {
        match class.0 {
            0 => Phase::Incision,
            1 => Phase::Viscoelastic,
            2 => Phase::Capsulorhexis,
            3 => Phase::Hydrodissection,
            4 => Phase::Phacoemulsification,
            _ => Phase::Idle,
        }
    }
}

impl From<&str> for Phase {
    fn from(s: &str) -> Self {
        match s {
            "idle" => Phase::Idle,
            "incision" => Phase::Incision,
            "viscoelastic" => Phase::Viscoelastic,
            "capsulorhexis" => Phase::Capsulorhexis,
            "hydrodissection" => Phase::Hydrodissection,
            "phacoemulsification" => Phase::Phacoemulsification,
            other => Phase::Other(other.to_string()),
        }
    }
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Phase::from(String::deserialize(d)?.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tool_class_names_round_trip() {
        for c in ToolClass::BUILTIN {
            assert_eq!(c.name().parse::<ToolClass>().unwrap(), c);
        }
        assert_eq!("tool_17".parse::<ToolClass>().unwrap(), ToolClass(17));
        assert!("scalpel".parse::<ToolClass>().is_err());
        assert_eq!(ToolClass::CAPSULORHEXIS_FORCEPS.label(), 12);
    }

    #[test]
    fn nominal_anatomy_is_valid() {
        let a = AnatomyState::nominal();
        assert_eq!(a.violation(), None);
        assert_eq!(a.globe_scale(), 1.0);
    }

    #[test]
    fn pupil_outside_iris_is_flagged() {
        let mut a = AnatomyState::nominal();
        a.pupil.cx = 0.5;
        assert_eq!(a.violation(), Some("pupil.centroid"));
    }

    #[test]
    fn phase_strings() {
        assert_eq!(
            serde_json::to_string(&Phase::Capsulorhexis).unwrap(),
            "\"capsulorhexis\""
        );
        let p: Phase = serde_json::from_str("\"suturing\"").unwrap();
        assert_eq!(p, Phase::Other("suturing".into()));
    }
}
