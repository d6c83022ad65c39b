use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::Vec2;
use crate::kinex::{AnatomyState, ScriptFrame, ToolClass, ToolState};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArticulationDelta {
    #[serde(default)]
    pub bend: f64,
    #[serde(default)]
    pub opening: f64,
}

/// Motion command for one instrument.
///
/// `spawn` places the tool absolutely (whether or not it is already present);
/// it cannot be combined with deltas or `despawn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolAction {
    pub tool_class: ToolClass,
    #[serde(default)]
    pub delta_tip: Vec2,
    #[serde(default)]
    pub delta_orientation: f64,
    #[serde(default)]
    pub delta_articulation: ArticulationDelta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spawn: Option<ToolState>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub despawn: bool,
}

impl ToolAction {
    pub fn delta(tool_class: ToolClass) -> Self {
        Self {
            tool_class,
            delta_tip: Vec2::ZERO,
            delta_orientation: 0.0,
            delta_articulation: ArticulationDelta::default(),
            spawn: None,
            despawn: false,
        }
    }

    pub fn spawn(state: ToolState) -> Self {
        Self {
            spawn: Some(state),
            ..Self::delta(state.tool_class)
        }
    }

    pub fn despawn(tool_class: ToolClass) -> Self {
        Self {
            despawn: true,
            ..Self::delta(tool_class)
        }
    }

    pub fn tip(mut self, d: Vec2) -> Self {
        self.delta_tip = d;
        self
    }

    pub fn orientation(mut self, d: f64) -> Self {
        self.delta_orientation = d;
        self
    }

    pub fn bend(mut self, d: f64) -> Self {
        self.delta_articulation.bend = d;
        self
    }

    pub fn opening(mut self, d: f64) -> Self {
        self.delta_articulation.opening = d;
        self
    }

    fn has_deltas(&self) -> bool {
        self.delta_tip != Vec2::ZERO
            || self.delta_orientation != 0.0
            || self.delta_articulation != ArticulationDelta::default()
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidAction(format!("{}: {m}", self.tool_class)));
        if self.tool_class.0 > ToolClass::MAX_ID {
            return bad("tool class id out of range");
        }
        if !(self.delta_tip.is_finite()
            && self.delta_orientation.is_finite()
            && self.delta_articulation.bend.is_finite()
            && self.delta_articulation.opening.is_finite())
        {
            return bad("non-finite delta");
        }
        if let Some(s) = &self.spawn {
            if self.despawn {
                return bad("spawn and despawn are mutually exclusive");
            }
            if self.has_deltas() {
                return bad("spawn cannot carry deltas");
            }
            if s.tool_class != self.tool_class {
                return bad("spawned state has a different tool class");
            }
            if !(s.tip.is_finite()
                && s.orientation.is_finite()
                && s.articulation.bend_angle.is_finite()
                && s.articulation.opening_angle.is_finite())
            {
                return bad("non-finite spawn state");
            }
        } else if self.despawn && self.has_deltas() {
            return bad("despawn cannot carry deltas");
        }
        Ok(())
    }
}

/// Anatomy change: relative nudges or an absolute placement (used by replay).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnatomyAction {
    Delta {
        #[serde(default)]
        translation: Vec2,
        #[serde(default)]
        yaw: f64,
        #[serde(default)]
        pitch: f64,
    },
    Set(AnatomyState),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    #[serde(default)]
    pub tools: Vec<ToolAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anatomy: Option<AnatomyAction>,
}

impl Action {
    pub fn tool(entry: ToolAction) -> Self {
        Self {
            tools: vec![entry],
            anatomy: None,
        }
    }

    pub fn anatomy_delta(translation: Vec2, yaw: f64, pitch: f64) -> Self {
        Self {
            tools: vec![],
            anatomy: Some(AnatomyAction::Delta {
                translation,
                yaw,
                pitch,
            }),
        }
    }

    /// Absolute action reproducing a script frame: anatomy is set, present
    /// tools are placed and absent ones despawned.
    pub fn place(frame: &ScriptFrame) -> Self {
        Self {
            tools: frame
                .tools
                .iter()
                .map(|t| {
                    if t.present {
                        ToolAction::spawn(*t)
                    } else {
                        ToolAction::despawn(t.tool_class)
                    }
                })
                .collect(),
            anatomy: Some(AnatomyAction::Set(frame.anatomy)),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (i, entry) in self.tools.iter().enumerate() {
            entry.validate()?;
            if self.tools[..i].iter().any(|e| e.tool_class == entry.tool_class) {
                return Err(SimError::InvalidAction(format!(
                    "duplicate entry for {}",
                    entry.tool_class
                )));
            }
        }
        match &self.anatomy {
            Some(AnatomyAction::Delta {
                translation,
                yaw,
                pitch,
            }) if !(translation.is_finite() && yaw.is_finite() && pitch.is_finite()) => {
                Err(SimError::InvalidAction("non-finite anatomy delta".into()))
            }
            _ => Ok(()),
        }
    }
}
