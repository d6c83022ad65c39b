//! Synthetic scripts with chosen entry directions and tool combinations.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{wrap_angle, Bounds, Vec2};
use crate::kinex::{AnatomyState, KinematicScript, ScriptFrame, ToolClass, ToolKind, ToolState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionPrimitive {
    /// Straight in along the entry ray toward the pupil.
    Approach,
    /// Along the ray with a lateral oscillation.
    Sweep,
    /// Approach, then orbit the pupil.
    Circular,
}

/// Parameters of an out-of-distribution scenario.
///
/// Entry angles are measured counter-clockwise as seen on screen: `0` enters
/// from the right edge, `π/2` from the top edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodRequest {
    pub tool_classes: Vec<ToolClass>,
    pub entry_angles: Vec<f64>,
    pub motion: MotionPrimitive,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "AnatomyState::nominal")]
    pub base_anatomy: AnatomyState,
    pub bounds: Bounds,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default = "default_fps")]
    pub fps: f64,
}

fn default_frames() -> usize {
    16
}

fn default_fps() -> f64 {
    4.0
}

/// Unit vector of an on-screen entry angle in y-down coordinates.
pub fn entry_direction(angle: f64) -> Vec2 {
    Vec2::new(angle.cos(), -angle.sin())
}

/// On-screen angle of a y-down vector, in `[0, 2π)`.
pub fn screen_angle(v: Vec2) -> f64 {
    (-v.y).atan2(v.x).rem_euclid(TAU)
}

struct Plan {
    class: ToolClass,
    kind: ToolKind,
    dir: Vec2,
    entry: Vec2,
    angle: f64,
    articulation_base: f64,
    articulation_swing: f64,
    phase: f64,
}

pub fn generate_ood_scenario(req: &OodRequest) -> Result<KinematicScript, SimError> {
    let bad = |m: String| Err(SimError::InvalidRequest(m));
    if req.tool_classes.len() != req.entry_angles.len() {
        return bad("tool_classes and entry_angles differ in length".into());
    }
    if req.tool_classes.is_empty() {
        return bad("at least one tool is required".into());
    }
    if req.frames == 0 {
        return bad("frames must be positive".into());
    }
    if !(req.fps > 0.0 && req.fps.is_finite()) {
        return bad("fps must be positive".into());
    }
    for (i, c) in req.tool_classes.iter().enumerate() {
        if req.tool_classes[..i].contains(c) {
            return bad(format!("tool class {c} requested twice"));
        }
    }
    if let Some(a) = req.entry_angles.iter().find(|a| !(0.0..TAU).contains(*a)) {
        return bad(format!("entry angle {a} outside [0, 2π)"));
    }
    if !req.bounds.is_valid() {
        return Err(SimError::BoundsTooSmall("bounds are empty".into()));
    }
    if let Some(f) = req.base_anatomy.violation() {
        return Err(SimError::InvalidState(format!("base_anatomy.{f}")));
    }

    let anatomy = req.base_anatomy;
    let pupil = anatomy.world_pupil().center();
    let iris = anatomy.world_iris();
    if !req.bounds.contains(pupil) {
        return Err(SimError::BoundsTooSmall("pupil lies outside the bounds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let mut plans = Vec::with_capacity(req.tool_classes.len());
    for (&class, &angle) in req.tool_classes.iter().zip(&req.entry_angles) {
        let dir = entry_direction(angle);
        let reach = req.bounds.ray_exit(pupil, dir);
        let entry = pupil + dir * reach;
        if !reach.is_finite() || iris.contains(entry.x, entry.y) {
            return Err(SimError::BoundsTooSmall(format!(
                "entry point for {class} at {angle:.3} rad is inside the iris"
            )));
        }
        let kind = class.default_kind();
        let (articulation_base, articulation_swing) = match kind {
            ToolKind::Forceps => (rng.random_range(0.15..0.6), rng.random_range(0.0..0.25)),
            ToolKind::Angled => (rng.random_range(-0.5..0.5), rng.random_range(0.0..0.15)),
            ToolKind::Straight => (0.0, 0.0),
        };
        plans.push(Plan {
            class,
            kind,
            dir,
            entry,
            angle,
            articulation_base,
            articulation_swing,
            phase: rng.random_range(0.0..TAU),
        });
    }
    plans.sort_by_key(|p| p.class);

    let n = req.frames;
    let depth = 0.5 * iris.a;
    let frames = (0..n)
        .map(|k| {
            let s = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
            let tools = plans
                .iter()
                .map(|p| {
                    let tip = req.bounds.clamp(tip_at(p, req.motion, pupil, depth, iris.a, s));
                    let to_pupil = pupil - tip;
                    let orientation = if to_pupil.norm() > 1e-9 {
                        wrap_angle(to_pupil.angle())
                    } else {
                        wrap_angle(p.dir.angle() + PI)
                    };
                    let swing = p.articulation_base + p.articulation_swing * (TAU * s + p.phase).sin();
                    let tool = ToolState::new(p.class, tip, orientation);
                    match p.kind {
                        ToolKind::Forceps => tool.with_articulation(0.0, swing),
                        ToolKind::Angled => tool.with_articulation(swing, 0.0),
                        ToolKind::Straight => tool,
                    }
                })
                .map(|mut t| {
                    t.articulation = t.articulation.clamped();
                    t
                })
                .collect();
            ScriptFrame { anatomy, tools }
        })
        .collect();
    let source = format!(
        "ood:{:?}:seed={}:{}",
        req.motion,
        req.seed,
        plans
            .iter()
            .map(|p| format!("{}@{:.4}", p.class, p.angle))
            .collect::<Vec<_>>()
            .join(",")
    );
    Ok(KinematicScript::new(req.fps, frames, source.to_lowercase()))
}

fn tip_at(p: &Plan, motion: MotionPrimitive, pupil: Vec2, depth: f64, iris_a: f64, s: f64) -> Vec2 {
    let target = pupil + p.dir * depth;
    match motion {
        MotionPrimitive::Approach => p.entry + (target - p.entry) * s,
        MotionPrimitive::Sweep => {
            let base = p.entry + (target - p.entry) * s;
            let lateral = p.dir.perp() * (0.3 * iris_a * (2.0 * TAU * s).sin());
            base + lateral
        }
        MotionPrimitive::Circular => {
            if s <= 0.5 {
                p.entry + (target - p.entry) * (2.0 * s)
            } else {
                let theta = p.angle + TAU * (2.0 * s - 1.0);
                pupil + entry_direction(theta) * depth
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CoordinateMap;

    fn request(classes: Vec<ToolClass>, angles: Vec<f64>, motion: MotionPrimitive) -> OodRequest {
        OodRequest {
            tool_classes: classes,
            entry_angles: angles,
            motion,
            seed: 3,
            base_anatomy: AnatomyState::nominal(),
            bounds: CoordinateMap::default().image_bounds(),
            frames: 16,
            fps: 4.0,
        }
    }

    #[test]
    fn approach_from_the_right() {
        let req = request(vec![ToolClass::KERATOME], vec![0.0], MotionPrimitive::Approach);
        let s = generate_ood_scenario(&req).unwrap();
        let first = s.frames[0].tools[0].tip;
        assert!((first.x - req.bounds.max.x).abs() < 1e-12);
        let pupil = req.base_anatomy.world_pupil().center();
        let last = s.frames.last().unwrap().tools[0].tip;
        assert!((last - pupil).norm() <= 1.2 * req.base_anatomy.iris.a);
    }

    #[test]
    fn opposite_entries_all_present() {
        let req = request(
            vec![ToolClass::CAPSULORHEXIS_FORCEPS, ToolClass::PHACO_HANDPIECE],
            vec![0.0, PI],
            MotionPrimitive::Sweep,
        );
        let s = generate_ood_scenario(&req).unwrap();
        let f0 = &s.frames[0].tools;
        assert!((f0[0].tip.x - req.bounds.max.x).abs() < 1e-12);
        assert!((f0[1].tip.x - req.bounds.min.x).abs() < 1e-12);
        assert!(s
            .frames
            .iter()
            .all(|f| f.tools.len() == 2 && f.tools.iter().all(|t| t.present)));
    }

    #[test]
    fn deterministic_for_seed() {
        let req = request(
            vec![ToolClass::VISCOELASTIC_CANNULA],
            vec![1.0],
            MotionPrimitive::Circular,
        );
        assert_eq!(
            generate_ood_scenario(&req).unwrap(),
            generate_ood_scenario(&req).unwrap()
        );
    }

    #[test]
    fn entry_inside_iris_rejected() {
        let mut req = request(vec![ToolClass::KERATOME], vec![0.0], MotionPrimitive::Approach);
        req.bounds = Bounds {
            min: Vec2::new(-0.2, -0.2),
            max: Vec2::new(0.2, 0.2),
        };
        assert!(matches!(generate_ood_scenario(&req), Err(SimError::BoundsTooSmall(_))));
    }
}
