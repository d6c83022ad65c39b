//! Instrument polygon templates.
//!
//! Templates live in tool-local sim units: the tip sits at the origin and the
//! shaft extends along `-x`. Each part is a convex polygon attached to one
//! articulation joint.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::fill::ConvexPolygon;
use crate::geometry::{CoordinateMap, Vec2};
use crate::kinex::{Articulation, ToolClass, ToolKind, ToolState};

pub const TEMPLATE_FORMAT_MAJOR: u32 = 1;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported template format version {0}")]
    Version(String),
    #[error("template `{class}` part `{part}`: {reason}")]
    Invalid {
        class: String,
        part: String,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    Rigid,
    /// Rotates about the tip by `+opening/2`.
    JawPositive,
    /// Rotates about the tip by `-opening/2`.
    JawNegative,
    /// Rotates about the tip by the bend angle.
    Bend,
    /// Translates with the bend pivot as the bent segment swings.
    BendFollow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplatePart {
    pub name: String,
    pub joint: Joint,
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolTemplate {
    pub format_version: String,
    pub tool_class: ToolClass,
    pub kind: ToolKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bend_pivot: Option<[f64; 2]>,
    pub parts: Vec<TemplatePart>,
}

/// Rigid placement of one template part: `world = origin + R(angle) · local`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartPose {
    pub origin: Vec2,
    pub angle: f64,
}

impl PartPose {
    pub fn apply(&self, local: Vec2) -> Vec2 {
        self.origin + local.rotate(self.angle)
    }
}

impl ToolTemplate {
    pub fn from_json(text: &str) -> Result<Self, TemplateError> {
        let t: ToolTemplate = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<(), TemplateError> {
        let major = self
            .format_version
            .split('.')
            .next()
            .and_then(|m| m.parse::<u32>().ok());
        if major != Some(TEMPLATE_FORMAT_MAJOR) {
            return Err(TemplateError::Version(self.format_version.clone()));
        }
        for part in &self.parts {
            let bad = |reason: &str| TemplateError::Invalid {
                class: self.tool_class.name(),
                part: part.name.clone(),
                reason: reason.to_string(),
            };
            if part.polygon.len() < 3 {
                return Err(bad("polygon needs at least 3 vertices"));
            }
            if part.polygon.iter().flatten().any(|v| !v.is_finite()) {
                return Err(bad("non-finite vertex"));
            }
            let n = part.polygon.len();
            let v: Vec<Vec2> = part.polygon.iter().map(|p| Vec2::new(p[0], p[1])).collect();
            let turns: Vec<f64> = (0..n)
                .map(|i| (v[(i + 1) % n] - v[i]).cross(v[(i + 2) % n] - v[(i + 1) % n]))
                .collect();
            if !(turns.iter().all(|&t| t >= 0.0) || turns.iter().all(|&t| t <= 0.0)) {
                return Err(bad("polygon is not convex"));
            }
            if matches!(part.joint, Joint::BendFollow) && self.bend_pivot.is_none() {
                return Err(bad("bend_follow joint without bend_pivot"));
            }
        }
        Ok(())
    }

    fn part_local(&self, joint: Joint, art: &Articulation) -> (f64, Vec2) {
        match joint {
            Joint::Rigid => (0.0, Vec2::ZERO),
            Joint::JawPositive => (0.5 * art.opening_angle, Vec2::ZERO),
            Joint::JawNegative => (-0.5 * art.opening_angle, Vec2::ZERO),
            Joint::Bend => (art.bend_angle, Vec2::ZERO),
            Joint::BendFollow => {
                let p = self.bend_pivot.map(|p| Vec2::new(p[0], p[1])).unwrap_or_default();
                (0.0, p.rotate(art.bend_angle) - p)
            }
        }
    }

    /// Sim-space pose of every part for the given tool kinematics.
    pub fn part_poses(&self, tip: Vec2, orientation: f64, art: &Articulation) -> Vec<PartPose> {
        self.parts
            .iter()
            .map(|part| {
                let (rho, tau) = self.part_local(part.joint, art);
                PartPose {
                    origin: tip + tau.rotate(orientation),
                    angle: orientation + rho,
                }
            })
            .collect()
    }

    /// Posed part polygons in pixel coordinates.
    pub fn pixel_polygons(&self, tool: &ToolState, map: &CoordinateMap) -> Vec<ConvexPolygon> {
        self.pixel_polygons_at(tool.tip, tool.orientation, &tool.articulation, map)
    }

    pub fn pixel_polygons_at(
        &self,
        tip: Vec2,
        orientation: f64,
        art: &Articulation,
        map: &CoordinateMap,
    ) -> Vec<ConvexPolygon> {
        self.part_poses(tip, orientation, art)
            .iter()
            .zip(&self.parts)
            .map(|(pose, part)| {
                ConvexPolygon::new(
                    part.polygon
                        .iter()
                        .map(|v| map.sim_to_image(pose.apply(Vec2::new(v[0], v[1]))))
                        .collect(),
                )
            })
            .collect()
    }
}

const BUILTIN_TEMPLATES: [&str; 5] = [
    include_str!("../../templates/keratome.json"),
    include_str!("../../templates/viscoelastic_cannula.json"),
    include_str!("../../templates/capsulorhexis_forceps.json"),
    include_str!("../../templates/hydrodissection_cannula.json"),
    include_str!("../../templates/phaco_handpiece.json"),
];

/// Templates keyed by tool class, with a generic straight fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolLibrary {
    templates: BTreeMap<ToolClass, ToolTemplate>,
    fallback: ToolTemplate,
}

impl Default for ToolLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ToolLibrary {
    pub fn builtin() -> Self {
        let templates = BUILTIN_TEMPLATES
            .iter()
            .map(|text| {
                let t = ToolTemplate::from_json(text).expect("built-in template is valid");
                (t.tool_class, t)
            })
            .collect();
        let mut fallback = ToolTemplate::from_json(BUILTIN_TEMPLATES[0]).expect("built-in template");
        fallback.tool_class = ToolClass(ToolClass::MAX_ID);
        Self { templates, fallback }
    }

    pub fn insert(&mut self, template: ToolTemplate) {
        self.templates.insert(template.tool_class, template);
    }

    pub fn get(&self, class: ToolClass) -> &ToolTemplate {
        self.templates.get(&class).unwrap_or(&self.fallback)
    }

    pub fn contains(&self, class: ToolClass) -> bool {
        self.templates.contains_key(&class)
    }

    pub fn kind(&self, class: ToolClass) -> ToolKind {
        self.templates
            .get(&class)
            .map(|t| t.kind)
            .unwrap_or_else(|| class.default_kind())
    }

    pub fn classes(&self) -> impl Iterator<Item = ToolClass> + '_ {
        self.templates.keys().copied()
    }
}
