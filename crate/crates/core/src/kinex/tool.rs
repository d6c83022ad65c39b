use super::{Articulation, KinexError, ProvenanceEvent, ToolClass, ToolKind, ToolState, MAX_OPENING};
use crate::geometry::{wrap_angle, BinaryMask, CoordinateMap, RegionMoments, Vec2};

/// Fraction of the projected mask length treated as the bent tip segment.
pub const TIP_SEGMENT_FRACTION: f64 = 1.0 / 3.0;

/// Minimum pixel count for a mask (or half-mask) to be measured.
pub const MIN_TOOL_PIXELS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ToolExtraction {
    pub states: Vec<ToolState>,
    pub provenance: Vec<ProvenanceEvent>,
}

/// Pixel-space kinematics measured from one mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToolMeasurement {
    pub tip_px: Vec2,
    pub orientation: f64,
    pub articulation: Articulation,
}

/// Extracts a per-frame track for one tool class, using the class's default
/// articulation model.
pub fn extract_tool(
    tool_masks: &[BinaryMask],
    tool_class: ToolClass,
    pupil_centroids: &[Vec2],
    map: &CoordinateMap,
) -> Result<ToolExtraction, KinexError> {
    extract_tool_with_kind(tool_masks, tool_class, tool_class.default_kind(), pupil_centroids, map)
}

pub fn extract_tool_with_kind(
    tool_masks: &[BinaryMask],
    tool_class: ToolClass,
    kind: ToolKind,
    pupil_centroids: &[Vec2],
    map: &CoordinateMap,
) -> Result<ToolExtraction, KinexError> {
    if tool_masks.is_empty() {
        return Err(KinexError::EmptySequence);
    }
    if pupil_centroids.len() != tool_masks.len() {
        return Err(KinexError::LengthMismatch {
            what: "pupil_centroids".into(),
            expected: tool_masks.len(),
            got: pupil_centroids.len(),
        });
    }
    let measured: Vec<Option<ToolMeasurement>> = tool_masks
        .iter()
        .zip(pupil_centroids)
        .map(|(m, &p)| measure_tool(m, kind, p))
        .collect();
    Ok(carry_forward(&measured, tool_class, map))
}

/// Converts pixel measurements to states, filling absent frames from the last
/// present one (or, before the first appearance, from the first one).
pub fn carry_forward(
    measured: &[Option<ToolMeasurement>],
    tool_class: ToolClass,
    map: &CoordinateMap,
) -> ToolExtraction {
    let to_state = |m: &ToolMeasurement| ToolState {
        tool_class,
        tip: map.image_to_sim(m.tip_px),
        orientation: m.orientation,
        articulation: m.articulation,
        present: true,
    };
    let first = measured.iter().flatten().next().map(to_state).unwrap_or(ToolState {
        present: false,
        ..ToolState::new(tool_class, Vec2::ZERO, 0.0)
    });
    let mut last = first;
    let mut states = Vec::with_capacity(measured.len());
    let mut provenance = Vec::new();
    for (i, m) in measured.iter().enumerate() {
        match m {
            Some(m) => {
                last = to_state(m);
                states.push(last);
            }
            None => {
                provenance.push(ProvenanceEvent::CarriedForward {
                    frame: i,
                    tool: tool_class.name(),
                });
                states.push(ToolState { present: false, ..last });
            }
        }
    }
    ToolExtraction { states, provenance }
}

/// Measures tip, orientation and articulation from a single mask, or `None`
/// when the tool is absent.
pub fn measure_tool(mask: &BinaryMask, kind: ToolKind, pupil_px: Vec2) -> Option<ToolMeasurement> {
    let points: Vec<Vec2> = mask.foreground_points().collect();
    if points.len() < MIN_TOOL_PIXELS {
        return None;
    }
    let m = RegionMoments::from_points(points.iter().copied())?;
    if m.eigenvalues().0 <= 0.0 {
        return None;
    }
    let mut axis = m.axis_angle();
    if (pupil_px - m.mean).dot(Vec2::from_angle(axis)) < 0.0 {
        axis += std::f64::consts::PI;
    }
    let dir = Vec2::from_angle(axis);

    match kind {
        ToolKind::Straight => Some(ToolMeasurement {
            tip_px: axis_tip(&points, m.mean, dir),
            orientation: wrap_angle(axis),
            articulation: Articulation::default(),
        }),
        ToolKind::Forceps => Some(ToolMeasurement {
            tip_px: axis_tip(&points, m.mean, dir),
            orientation: wrap_angle(axis),
            articulation: Articulation {
                bend_angle: 0.0,
                opening_angle: jaw_opening(&points, m.mean, dir),
            },
        }),
        ToolKind::Angled => Some(measure_angled(&points, m.mean, dir)),
    }
}

/// Foreground point with the largest projection on `dir`; ties go to the
/// lower `y`, then the lower `x`.
pub fn extreme_pixel(points: &[Vec2], origin: Vec2, dir: Vec2) -> Vec2 {
    *points
        .iter()
        .max_by(|p, q| {
            let (sp, sq) = ((**p - origin).dot(dir), (**q - origin).dot(dir));
            sp.total_cmp(&sq)
                .then_with(|| q.y.total_cmp(&p.y))
                .then_with(|| q.x.total_cmp(&p.x))
        })
        .expect("non-empty point set")
}

/// Extreme pixel projected onto the axis line through `origin`.
fn axis_tip(points: &[Vec2], origin: Vec2, dir: Vec2) -> Vec2 {
    let p = extreme_pixel(points, origin, dir);
    origin + dir * (p - origin).dot(dir)
}

/// Angle between the principal axes of the two halves on either side of the
/// main axis.
fn jaw_opening(points: &[Vec2], mean: Vec2, dir: Vec2) -> f64 {
    let side = |p: &&Vec2| dir.cross(**p - mean) > 0.0;
    let left: Vec<Vec2> = points.iter().filter(side).copied().collect();
    let right: Vec<Vec2> = points.iter().filter(|p| !side(p)).copied().collect();
    if left.len() < MIN_TOOL_PIXELS || right.len() < MIN_TOOL_PIXELS {
        return 0.0;
    }
    let axis = |pts: &[Vec2]| RegionMoments::from_points(pts.iter().copied()).map(|m| m.axis_angle());
    match (axis(&left), axis(&right)) {
        (Some(a), Some(b)) => axis_difference(a, b).abs().min(MAX_OPENING),
        _ => 0.0,
    }
}

/// Signed difference `a - b` between two axis angles, folded into `(-π/2, π/2]`.
fn axis_difference(a: f64, b: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut d = (a - b).rem_euclid(pi);
    if d > pi / 2.0 {
        d -= pi;
    }
    d
}

fn oriented(axis: f64, reference: Vec2) -> f64 {
    if Vec2::from_angle(axis).dot(reference) < 0.0 {
        axis + std::f64::consts::PI
    } else {
        axis
    }
}

/// Splits the mask at one third of its projected length from the tip; the
/// shaft part gives orientation, the tip part the bend and tip position.
fn measure_angled(points: &[Vec2], mean: Vec2, dir: Vec2) -> ToolMeasurement {
    let proj = |p: &Vec2| (*p - mean).dot(dir);
    let (lo, hi) = points
        .iter()
        .map(proj)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
    let cut = hi - (hi - lo) * TIP_SEGMENT_FRACTION;
    let (tip_part, shaft_part): (Vec<Vec2>, Vec<Vec2>) = points.iter().partition(|p| proj(p) >= cut);
    let fallback = ToolMeasurement {
        tip_px: axis_tip(points, mean, dir),
        orientation: wrap_angle(dir.angle()),
        articulation: Articulation::default(),
    };
    if tip_part.len() < MIN_TOOL_PIXELS || shaft_part.len() < MIN_TOOL_PIXELS {
        return fallback;
    }
    let (Some(tm), Some(sm)) = (
        RegionMoments::from_points(tip_part.iter().copied()),
        RegionMoments::from_points(shaft_part.iter().copied()),
    ) else {
        return fallback;
    };
    let shaft_axis = oriented(sm.axis_angle(), dir);
    let shaft_dir = Vec2::from_angle(shaft_axis);
    let tip_axis = oriented(tm.axis_angle(), shaft_dir);
    let tip_dir = Vec2::from_angle(tip_axis);
    let bend = wrap_angle(tip_axis - shaft_axis);
    ToolMeasurement {
        tip_px: axis_tip(&tip_part, tm.mean, tip_dir),
        orientation: wrap_angle(shaft_axis),
        articulation: Articulation {
            bend_angle: bend,
            opening_angle: 0.0,
        }
        .clamped(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn bar() -> BinaryMask {
        // 60 x 6 bar, columns 30..=89, rows 61..=66
        BinaryMask::from_fn(128, 128, |x, y| (30..90).contains(&x) && (61..67).contains(&y))
    }

    #[test]
    fn bar_points_toward_pupil_on_the_right() {
        let mask = bar();
        let m = measure_tool(&mask, ToolKind::Straight, Vec2::new(110.0, 64.0)).unwrap();
        assert!(m.orientation.abs() < 1e-12);
        // brute-force oracle: distance to the nearest pixel of the rightmost column
        let right = mask.foreground_points().map(|p| p.x).fold(f64::MIN, f64::max);
        let nearest = mask
            .foreground_points()
            .filter(|p| p.x == right)
            .map(|p| (p - m.tip_px).norm())
            .fold(f64::MAX, f64::min);
        assert!(nearest <= 1.0, "{nearest}");
    }

    #[test]
    fn bar_flips_for_pupil_on_the_left() {
        let m = measure_tool(&bar(), ToolKind::Straight, Vec2::new(5.0, 64.0)).unwrap();
        assert!((m.orientation.abs() - PI).abs() < 1e-12);
        assert!((m.tip_px.x - 30.0).abs() <= 1.0);
    }

    #[test]
    fn tie_break_prefers_lower_y_then_x() {
        let pts = [Vec2::new(3.0, 5.0), Vec2::new(3.0, 2.0), Vec2::new(1.0, 2.0)];
        let p = extreme_pixel(&pts, Vec2::ZERO, Vec2::new(0.0, -1.0));
        // both y=2 points tie on projection; lower x wins
        assert_eq!(p, Vec2::new(1.0, 2.0));
        let p = extreme_pixel(&pts, Vec2::ZERO, Vec2::new(1.0, 0.0));
        assert_eq!(p, Vec2::new(3.0, 2.0));
    }

    /// Two thick branches meeting at `apex`, symmetric about +x.
    fn v_mask(apex: Vec2, half_angle: f64, len: f64, half_width: f64) -> BinaryMask {
        BinaryMask::from_fn(128, 128, |x, y| {
            let p = Vec2::new(f64::from(x), f64::from(y)) - apex;
            [half_angle, -half_angle].iter().any(|&a| {
                // arms extend from the apex back along -x rotated by ±a
                let d = Vec2::from_angle(PI + a);
                let s = p.dot(d);
                s >= 0.0 && s <= len && p.cross(d).abs() <= half_width
            })
        })
    }

    #[test]
    fn v_shape_opening() {
        let target = PI / 6.0;
        let mask = v_mask(Vec2::new(100.0, 64.0), target / 2.0, 60.0, 1.5);
        let m = measure_tool(&mask, ToolKind::Forceps, Vec2::new(120.0, 64.0)).unwrap();
        assert!((m.articulation.opening_angle - target).abs() < 2f64.to_radians());
    }

    #[test]
    fn absent_frames_carry_previous_kinematics() {
        let map = CoordinateMap::default();
        let empty = BinaryMask::new(128, 128);
        let masks = vec![empty.clone(), bar(), empty];
        let pupils = vec![Vec2::new(110.0, 64.0); 3];
        let out = extract_tool(&masks, ToolClass::KERATOME, &pupils, &map).unwrap();
        assert!(!out.states[0].present && out.states[1].present && !out.states[2].present);
        assert!(out.states[0].kinematics_eq(&out.states[1]));
        assert!(out.states[2].kinematics_eq(&out.states[1]));
        assert_eq!(out.provenance.len(), 2);
    }
}
