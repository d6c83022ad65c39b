//! Rule-based transition system over [`SimState`].
//!
//! A transition applies the action's deltas and then enforces, in order:
//! articulation limits, yaw/pitch limits, the globe-surface carry of engaged
//! tools, and the scenario bounds. Interactive stepping and scripted replay
//! both go through [`Simulator::transition`].

mod action;
mod ood;

pub use action::{Action, AnatomyAction, ArticulationDelta, ToolAction};
pub use ood::{entry_direction, generate_ood_scenario, screen_angle, MotionPrimitive, OodRequest};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Bounds, CoordinateMap, GlobeRotation, Vec2};
use crate::kinex::{AnatomyState, KinematicScript, ScriptFrame, ToolClass, ToolState};
use crate::renderer::{LabelRaster, Renderer, ToolLibrary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("tool `{0}` is not present and the action does not spawn it")]
    UnknownToolClass(ToolClass),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("empty sequence")]
    EmptySequence,
    #[error("scenario bounds are too small: {0}")]
    BoundsTooSmall(String),
    #[error("invalid scenario request: {0}")]
    InvalidRequest(String),
}

impl SimError {
    /// Variant name, for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::UnknownToolClass(_) => "UnknownToolClass",
            SimError::InvalidAction(_) => "InvalidAction",
            SimError::InvalidState(_) => "InvalidState",
            SimError::EmptySequence => "EmptySequence",
            SimError::BoundsTooSmall(_) => "BoundsTooSmall",
            SimError::InvalidRequest(_) => "InvalidRequest",
        }
    }
}

/// Complete simulator state at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub anatomy: AnatomyState,
    /// One entry per tool class ever placed, sorted by class. Despawned tools
    /// stay listed with `present = false`.
    pub tools: Vec<ToolState>,
    pub frame_index: u64,
    pub globe_scale: f64,
}

impl SimState {
    pub fn new(anatomy: AnatomyState, mut tools: Vec<ToolState>) -> Self {
        tools.sort_by_key(|t| t.tool_class);
        Self {
            globe_scale: anatomy.globe_scale(),
            anatomy,
            tools,
            frame_index: 0,
        }
    }

    pub fn from_frame(frame: &ScriptFrame, frame_index: u64) -> Self {
        let mut s = Self::new(frame.anatomy, frame.tools.clone());
        s.frame_index = frame_index;
        s
    }

    pub fn to_frame(&self) -> ScriptFrame {
        ScriptFrame {
            anatomy: self.anatomy,
            tools: self.tools.clone(),
        }
    }

    pub fn tool(&self, class: ToolClass) -> Option<&ToolState> {
        self.tools
            .binary_search_by_key(&class, |t| t.tool_class)
            .ok()
            .map(|i| &self.tools[i])
    }

    pub fn present_tools(&self) -> impl Iterator<Item = &ToolState> {
        self.tools.iter().filter(|t| t.present)
    }

    /// Engaged tools have their tip on the projected globe disc.
    pub fn is_engaged(&self, tool: &ToolState) -> bool {
        tool.present
            && (tool.tip - self.anatomy.globe_translation).norm()
                <= crate::kinex::NOMINAL_GLOBE_RADIUS * self.globe_scale
    }

    /// Checks every type invariant; `bounds` is optional because states built
    /// outside a scenario have none.
    pub fn violation(&self, bounds: Option<&Bounds>) -> Option<String> {
        if let Some(f) = self.anatomy.violation() {
            return Some(format!("anatomy.{f}"));
        }
        if !(self.globe_scale > 0.0 && self.globe_scale.is_finite()) {
            return Some("globe_scale".into());
        }
        for w in self.tools.windows(2) {
            if w[0].tool_class >= w[1].tool_class {
                return Some(format!("tools not sorted/unique at {}", w[1].tool_class));
            }
        }
        for t in &self.tools {
            if !t.is_valid() {
                return Some(format!("tool {} kinematics", t.tool_class));
            }
            if let Some(b) = bounds {
                if t.present && !b.contains(t.tip) {
                    return Some(format!("tool {} outside bounds", t.tool_class));
                }
            }
        }
        None
    }

    /// Same observable scene: anatomy and present tools bitwise equal.
    pub fn same_scene(&self, other: &SimState) -> bool {
        self.frame_index == other.frame_index
            && self.globe_scale.to_bits() == other.globe_scale.to_bits()
            && self.anatomy == other.anatomy
            && self.present_tools().eq(other.present_tools())
    }
}

/// Scenario definition shared by sessions and batch generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub initial_state: SimState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub seed: u64,
    pub bounds: Bounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Script(KinematicScript),
    Actions(Vec<Action>),
}

impl ScenarioSpec {
    /// A nominal eye with no tools, bounded by the image.
    pub fn nominal(map: &CoordinateMap) -> Self {
        Self {
            initial_state: SimState::new(AnatomyState::nominal(), vec![]),
            schedule: None,
            seed: 0,
            bounds: map.image_bounds(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !self.bounds.is_valid() {
            return Err(SimError::InvalidState("bounds".into()));
        }
        if let Some(v) = self.initial_state.violation(Some(&self.bounds)) {
            return Err(SimError::InvalidState(v));
        }
        match &self.schedule {
            Some(Schedule::Script(script)) => {
                script.validate().map_err(|e| SimError::InvalidState(e.to_string()))?;
            }
            Some(Schedule::Actions(actions)) => {
                for a in actions {
                    a.validate()?;
                }
            }
            None => {}
        }
        Ok(())
    }
}

fn nudge(x: f64, d: f64) -> f64 {
    if d == 0.0 {
        x
    } else {
        x + d
    }
}

fn nudge_vec(p: Vec2, d: Vec2) -> Vec2 {
    Vec2::new(nudge(p.x, d.x), nudge(p.y, d.y))
}

/// The transition function together with its rendering context.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    pub renderer: Renderer,
    pub bounds: Bounds,
}

impl Simulator {
    pub fn new(map: CoordinateMap, tools: ToolLibrary, bounds: Bounds) -> Self {
        Self {
            renderer: Renderer::new(map, tools),
            bounds,
        }
    }

    /// Image-bounded simulator with the built-in instruments.
    pub fn with_map(map: CoordinateMap) -> Self {
        Self::new(map, ToolLibrary::builtin(), map.image_bounds())
    }

    pub fn map(&self) -> &CoordinateMap {
        &self.renderer.map
    }

    /// Applies one action and renders the resulting frame.
    pub fn transition(&self, state: &SimState, action: &Action) -> Result<(SimState, LabelRaster), SimError> {
        let next = self.advance(state, action)?;
        let raster = self.renderer.labels(&next);
        Ok((next, raster))
    }

    /// State half of [`transition`](Self::transition).
    pub fn advance(&self, state: &SimState, action: &Action) -> Result<SimState, SimError> {
        action.validate()?;
        let old_anatomy = state.anatomy;
        let old_scale = state.globe_scale;
        let mut tools = state.tools.clone();
        let mut placed = vec![false; tools.len()];

        for entry in &action.tools {
            let idx = tools.binary_search_by_key(&entry.tool_class, |t| t.tool_class);
            if let Some(spawn) = &entry.spawn {
                let mut t = *spawn;
                t.tool_class = entry.tool_class;
                t.present = true;
                t.orientation = wrap_angle(t.orientation);
                match idx {
                    Ok(i) => {
                        tools[i] = t;
                        placed[i] = true;
                    }
                    Err(i) => {
                        tools.insert(i, t);
                        placed.insert(i, true);
                    }
                }
                continue;
            }
            if entry.despawn {
                // despawning an already absent tool is a no-op
                match idx {
                    Ok(i) => tools[i].present = false,
                    Err(_) => return Err(SimError::UnknownToolClass(entry.tool_class)),
                }
                continue;
            }
            let i = match idx {
                Ok(i) if tools[i].present => i,
                _ => return Err(SimError::UnknownToolClass(entry.tool_class)),
            };
            let t = &mut tools[i];
            t.tip = nudge_vec(t.tip, entry.delta_tip);
            t.orientation = wrap_angle(nudge(t.orientation, entry.delta_orientation));
            t.articulation.bend_angle = nudge(t.articulation.bend_angle, entry.delta_articulation.bend);
            t.articulation.opening_angle = nudge(t.articulation.opening_angle, entry.delta_articulation.opening);
        }

        // (1) articulation limits
        for t in tools.iter_mut() {
            t.articulation = t.articulation.clamped();
        }

        // (2) anatomy update with yaw/pitch limits
        let anatomy = match &action.anatomy {
            None => old_anatomy,
            Some(AnatomyAction::Delta {
                translation,
                yaw,
                pitch,
            }) => {
                let mut a = old_anatomy;
                a.globe_translation = nudge_vec(a.globe_translation, *translation);
                a.globe_rotation = GlobeRotation {
                    yaw: nudge(a.globe_rotation.yaw, *yaw),
                    pitch: nudge(a.globe_rotation.pitch, *pitch),
                }
                .clamped();
                a
            }
            Some(AnatomyAction::Set(a)) => {
                let mut a = *a;
                a.globe_rotation = a.globe_rotation.clamped();
                a
            }
        };
        if let Some(f) = anatomy.violation() {
            return Err(SimError::InvalidAction(format!("anatomy would violate {f}")));
        }
        let globe_scale = anatomy.globe_scale();

        // (3) engaged tools ride on the globe surface
        if anatomy != old_anatomy {
            let probe = SimState {
                anatomy: old_anatomy,
                tools: Vec::new(),
                frame_index: state.frame_index,
                globe_scale: old_scale,
            };
            let ratio = globe_scale / old_scale;
            for (t, &was_placed) in tools.iter_mut().zip(&placed) {
                if was_placed || !probe.is_engaged(t) {
                    continue;
                }
                t.tip = carry_tip(t.tip, &old_anatomy, &anatomy, ratio);
            }
        }

        // (4) scenario bounds
        for t in tools.iter_mut().filter(|t| t.present) {
            t.tip = self.bounds.clamp(t.tip);
        }

        Ok(SimState {
            anatomy,
            tools,
            frame_index: state.frame_index + 1,
            globe_scale,
        })
    }

    /// Replays a script frame by frame as absolute placements.
    pub fn replay(&self, script: &KinematicScript) -> Result<(Vec<SimState>, Vec<LabelRaster>), SimError> {
        let states = self.replay_states(script)?;
        let rasters = states.iter().map(|s| self.renderer.labels(s)).collect();
        Ok((states, rasters))
    }

    pub fn replay_states(&self, script: &KinematicScript) -> Result<Vec<SimState>, SimError> {
        let first = script.frames.first().ok_or(SimError::EmptySequence)?;
        let mut state = SimState::from_frame(first, 0);
        for t in state.tools.iter_mut().filter(|t| t.present) {
            t.tip = self.bounds.clamp(t.tip);
        }
        let mut states = Vec::with_capacity(script.frames.len());
        states.push(state.clone());
        for frame in &script.frames[1..] {
            state = self.advance(&state, &Action::place(frame))?;
            states.push(state.clone());
        }
        Ok(states)
    }

    /// Runs the scenario's schedule, returning every state including the first.
    pub fn run_scenario(&self, spec: &ScenarioSpec) -> Result<Vec<SimState>, SimError> {
        spec.validate()?;
        let sim = Simulator {
            renderer: self.renderer.clone(),
            bounds: spec.bounds,
        };
        match &spec.schedule {
            None => Ok(vec![spec.initial_state.clone()]),
            Some(Schedule::Script(script)) => sim.replay_states(script),
            Some(Schedule::Actions(actions)) => {
                let mut states = vec![spec.initial_state.clone()];
                for a in actions {
                    let next = sim.advance(states.last().expect("non-empty"), a)?;
                    states.push(next);
                }
                Ok(states)
            }
        }
    }
}

/// Re-expresses an engaged tip relative to the moved anterior segment: the
/// offset from the old anchor is scaled by the globe-scale ratio and attached
/// to the new anchor.
pub fn carry_tip(tip: Vec2, from: &AnatomyState, to: &AnatomyState, scale_ratio: f64) -> Vec2 {
    let offset = tip - from.anchor();
    let offset = if scale_ratio == 1.0 {
        offset
    } else {
        offset * scale_ratio
    };
    to.anchor() + offset
}
