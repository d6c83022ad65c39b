use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{AnatomyState, KinexError, Phase, ToolState};
use crate::geometry::wrap_angle;

pub const SCRIPT_FORMAT_VERSION: &str = "1.0";

/// One time step: anatomy plus every tracked tool sorted by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptFrame {
    pub anatomy: AnatomyState,
    pub tools: Vec<ToolState>,
}

/// Something the pipeline changed or inferred instead of measuring directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ProvenanceEvent {
    /// Field filled by interpolation because its mask was degenerate.
    Interpolated { frame: usize, field: String },
    /// Tool absent; kinematics copied from a neighbouring present frame.
    CarriedForward { frame: usize, tool: String },
    Clamped {
        frame: usize,
        field: String,
        from: f64,
        to: f64,
    },
}

/// Time-indexed anatomy and tool parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicScript {
    pub format_version: String,
    pub fps: f64,
    pub source_id: String,
    pub frames: Vec<ScriptFrame>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_labels: Option<Vec<Phase>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<ProvenanceEvent>,
}

impl KinematicScript {
    pub fn new(fps: f64, frames: Vec<ScriptFrame>, source_id: impl Into<String>) -> Self {
        Self {
            format_version: SCRIPT_FORMAT_VERSION.into(),
            fps,
            source_id: source_id.into(),
            frames,
            phase_labels: None,
            provenance: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Checks every type invariant, reporting the first offending frame.
    pub fn validate(&self) -> Result<(), KinexError> {
        let bad = |frame: usize, field: String| Err(KinexError::InvariantViolation { frame, field });
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(0, "fps".into());
        }
        if let Some(labels) = &self.phase_labels {
            if labels.len() != self.frames.len() {
                return Err(KinexError::LengthMismatch {
                    what: "phase_labels".into(),
                    expected: self.frames.len(),
                    got: labels.len(),
                });
            }
        }
        let classes = |f: &ScriptFrame| f.tools.iter().map(|t| t.tool_class).collect::<Vec<_>>();
        let reference = self.frames.first().map(classes).unwrap_or_default();
        for (i, frame) in self.frames.iter().enumerate() {
            if let Some(field) = frame.anatomy.violation() {
                return bad(i, format!("anatomy.{field}"));
            }
            if classes(frame) != reference {
                return bad(i, "tools (class list differs from frame 0)".into());
            }
            for w in frame.tools.windows(2) {
                if w[0].tool_class >= w[1].tool_class {
                    return bad(i, "tools (not sorted by class)".into());
                }
            }
            for t in &frame.tools {
                if !t.tip.is_finite() {
                    return bad(i, format!("{}.tip", t.tool_class));
                }
                if !(-PI..PI).contains(&t.orientation) {
                    return bad(i, format!("{}.orientation", t.tool_class));
                }
                if !t.articulation.is_valid() {
                    return bad(i, format!("{}.articulation", t.tool_class));
                }
            }
        }
        Ok(())
    }
}

/// Combines per-frame anatomy and per-class tool tracks into a validated
/// script. Articulation is clamped and orientation wrapped, each change
/// recorded in the provenance log.
pub fn assemble_script(
    anatomy: Vec<AnatomyState>,
    tools: Vec<Vec<ToolState>>,
    fps: f64,
    labels: Option<Vec<Phase>>,
    source_id: impl Into<String>,
) -> Result<KinematicScript, KinexError> {
    let n = anatomy.len();
    for track in &tools {
        if track.len() != n {
            return Err(KinexError::LengthMismatch {
                what: "tool track".into(),
                expected: n,
                got: track.len(),
            });
        }
    }
    let mut provenance = Vec::new();
    let mut frames: Vec<ScriptFrame> = anatomy
        .into_iter()
        .map(|a| ScriptFrame {
            anatomy: a,
            tools: Vec::with_capacity(tools.len()),
        })
        .collect();
    for track in tools {
        for (i, mut t) in track.into_iter().enumerate() {
            let name = t.tool_class.name();
            let clamped = t.articulation.clamped();
            let pairs = [
                ("bend_angle", t.articulation.bend_angle, clamped.bend_angle),
                ("opening_angle", t.articulation.opening_angle, clamped.opening_angle),
            ];
            for (field, from, to) in pairs {
                if from.to_bits() != to.to_bits() {
                    provenance.push(ProvenanceEvent::Clamped {
                        frame: i,
                        field: format!("{name}.{field}"),
                        from,
                        to,
                    });
                }
            }
            t.articulation = clamped;
            let wrapped = wrap_angle(t.orientation);
            if wrapped.to_bits() != t.orientation.to_bits() {
                provenance.push(ProvenanceEvent::Clamped {
                    frame: i,
                    field: format!("{name}.orientation"),
                    from: t.orientation,
                    to: wrapped,
                });
                t.orientation = wrapped;
            }
            frames[i].tools.push(t);
        }
    }
    for f in &mut frames {
        f.tools.sort_by_key(|t| t.tool_class);
    }
    let mut script = KinematicScript::new(fps, frames, source_id);
    script.phase_labels = labels;
    script.provenance = provenance;
    script.validate()?;
    Ok(script)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::kinex::{ToolClass, MAX_OPENING};

    fn forceps(opening: f64) -> ToolState {
        ToolState::new(ToolClass::CAPSULORHEXIS_FORCEPS, Vec2::new(0.1, 0.0), 0.5).with_articulation(0.0, opening)
    }

    #[test]
    fn single_frame_single_tool() {
        let s = assemble_script(vec![AnatomyState::nominal()], vec![vec![forceps(0.2)]], 4.0, None, "x").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.fps, 4.0);
        assert!(s.provenance.is_empty());
    }

    #[test]
    fn mismatched_lengths() {
        let err = assemble_script(
            vec![AnatomyState::nominal(); 16],
            vec![vec![forceps(0.2); 15]],
            4.0,
            None,
            "x",
        )
        .unwrap_err();
        assert!(matches!(
            err,
            KinexError::LengthMismatch {
                expected: 16,
                got: 15,
                ..
            }
        ));
    }

    #[test]
    fn opening_is_clamped_and_logged() {
        let s = assemble_script(vec![AnatomyState::nominal()], vec![vec![forceps(2.0)]], 4.0, None, "x").unwrap();
        assert_eq!(s.frames[0].tools[0].articulation.opening_angle, MAX_OPENING);
        assert_eq!(
            s.provenance,
            vec![ProvenanceEvent::Clamped {
                frame: 0,
                field: "capsulorhexis_forceps.opening_angle".into(),
                from: 2.0,
                to: MAX_OPENING
            }]
        );
    }

    #[test]
    fn phase_label_length_checked() {
        let r = assemble_script(
            vec![AnatomyState::nominal(); 2],
            vec![],
            4.0,
            Some(vec![Phase::Idle]),
            "x",
        );
        assert!(matches!(r, Err(KinexError::LengthMismatch { .. })));
    }
}
