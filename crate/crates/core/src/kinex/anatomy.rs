use std::f64::consts::PI;

use super::refine::{refine_ellipse, Silhouette};
use super::{AnatomyState, KinexError, ProvenanceEvent};
use crate::geometry::{
    fit_ellipse_moments, fit_similarity, residual_to_rotation, BinaryMask, CoordinateMap, Ellipse, SimilarityTransform,
    Vec2,
};

/// Per-frame anatomy plus the global transform behind each frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AnatomyExtraction {
    pub states: Vec<AnatomyState>,
    /// Landmark similarity from frame 0 to each frame (pixels).
    pub global: Vec<SimilarityTransform>,
    /// Fitted pupil centroid of each frame (pixels), after gap filling.
    pub pupil_centroids_px: Vec<Vec2>,
    pub provenance: Vec<ProvenanceEvent>,
}

/// Recovers globe translation, yaw/pitch, and iris/pupil ellipses.
///
/// The globe displacement of frame `t` is the displacement that the landmark
/// similarity induces at the frame-0 iris centroid. Whatever pupil motion is
/// left after removing it becomes yaw/pitch on a sphere whose radius is the
/// frame-0 iris semi-major axis.
pub fn extract_anatomy(
    pupil_masks: &[BinaryMask],
    iris_masks: &[BinaryMask],
    landmark_tracks: &[Vec<Vec2>],
    map: &CoordinateMap,
) -> Result<AnatomyExtraction, KinexError> {
    extract(pupil_masks, iris_masks, None, landmark_tracks, map)
}

/// Like [`extract_anatomy`], but each moment fit is then refined against its
/// mask with the `occluders` pixels (instruments covering the eye) ignored.
pub fn extract_anatomy_occluded(
    pupil_masks: &[BinaryMask],
    iris_masks: &[BinaryMask],
    occluders: &[BinaryMask],
    landmark_tracks: &[Vec<Vec2>],
    map: &CoordinateMap,
) -> Result<AnatomyExtraction, KinexError> {
    if occluders.len() != pupil_masks.len() {
        return Err(KinexError::LengthMismatch {
            what: "occluders".into(),
            expected: pupil_masks.len(),
            got: occluders.len(),
        });
    }
    extract(pupil_masks, iris_masks, Some(occluders), landmark_tracks, map)
}

fn fit_all(masks: &[BinaryMask], occluders: Option<&[BinaryMask]>) -> Vec<Option<Ellipse>> {
    masks
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let e = fit_ellipse_moments(m).ok()?;
            Some(match occluders {
                Some(occ) => refine_ellipse(&e, &mut Silhouette::new(m, Some(&occ[i]))),
                None => e,
            })
        })
        .collect()
}

fn extract(
    pupil_masks: &[BinaryMask],
    iris_masks: &[BinaryMask],
    occluders: Option<&[BinaryMask]>,
    landmark_tracks: &[Vec<Vec2>],
    map: &CoordinateMap,
) -> Result<AnatomyExtraction, KinexError> {
    let n = pupil_masks.len();
    if n == 0 {
        return Err(KinexError::EmptySequence);
    }
    for (what, got) in [
        ("iris_masks", iris_masks.len()),
        ("landmark_tracks", landmark_tracks.len()),
    ] {
        if got != n {
            return Err(KinexError::LengthMismatch {
                what: what.into(),
                expected: n,
                got,
            });
        }
    }
    let mut provenance = Vec::new();
    let pupils = fill_gaps(fit_all(pupil_masks, occluders), "pupil", &mut provenance)?;
    let irises = fill_gaps(fit_all(iris_masks, occluders), "iris", &mut provenance)?;

    let base_landmarks = &landmark_tracks[0];
    let iris0 = irises[0].center();
    let pupil0 = pupils[0].center();
    let radius_px = irises[0].a;

    let mut states = Vec::with_capacity(n);
    let mut global = Vec::with_capacity(n);
    for t in 0..n {
        let g = if landmark_tracks[t] == *base_landmarks {
            SimilarityTransform::IDENTITY
        } else {
            fit_similarity(base_landmarks, &landmark_tracks[t])?.transform
        };
        let shift = g.displacement_at(iris0);
        let residual = pupils[t].center() - pupil0 - shift;
        let rotation = residual_to_rotation(residual, radius_px);

        let globe_translation = map.image_to_sim(iris0 + shift);
        let mut iris = map.ellipse_to_sim(&irises[t]);
        let mut pupil = map.ellipse_to_sim(&pupils[t]);
        let mut state = AnatomyState {
            globe_translation,
            globe_rotation: rotation,
            iris,
            pupil,
        };
        let anchor = state.anchor();
        iris = iris.with_center(iris.center() - anchor);
        pupil = pupil.with_center(pupil.center() - anchor);
        if pupil.a > iris.a || pupil.b > iris.b {
            let (a, b) = (pupil.a.min(iris.a), pupil.b.min(iris.b));
            provenance.push(ProvenanceEvent::Clamped {
                frame: t,
                field: "pupil.a".into(),
                from: pupil.a,
                to: a,
            });
            pupil = Ellipse::new(pupil.cx, pupil.cy, pupil.phi, a, b);
        }
        state.iris = iris;
        state.pupil = pupil;
        if let Some(field) = state.violation() {
            return Err(KinexError::InvariantViolation {
                frame: t,
                field: format!("anatomy.{field}"),
            });
        }
        states.push(state);
        global.push(g);
    }
    Ok(AnatomyExtraction {
        states,
        global,
        pupil_centroids_px: pupils.iter().map(Ellipse::center).collect(),
        provenance,
    })
}

/// Linear interpolation between the nearest valid neighbours; leading and
/// trailing gaps copy the nearest valid fit.
fn fill_gaps(
    fits: Vec<Option<Ellipse>>,
    field: &str,
    provenance: &mut Vec<ProvenanceEvent>,
) -> Result<Vec<Ellipse>, KinexError> {
    let valid: Vec<usize> = (0..fits.len()).filter(|&i| fits[i].is_some()).collect();
    if valid.is_empty() {
        return Err(KinexError::AllFramesDegenerate(field.into()));
    }
    let mut out = Vec::with_capacity(fits.len());
    for (i, fit) in fits.iter().enumerate() {
        if let Some(e) = fit {
            out.push(*e);
            continue;
        }
        provenance.push(ProvenanceEvent::Interpolated {
            frame: i,
            field: field.into(),
        });
        let next = valid.iter().copied().find(|&j| j > i);
        let prev = valid.iter().copied().rev().find(|&j| j < i);
        let e = match (prev, next) {
            (Some(p), Some(q)) => {
                let s = (i - p) as f64 / (q - p) as f64;
                lerp_ellipse(&fits[p].unwrap(), &fits[q].unwrap(), s)
            }
            (Some(j), None) | (None, Some(j)) => fits[j].unwrap(),
            (None, None) => unreachable!("at least one valid fit"),
        };
        out.push(e);
    }
    Ok(out)
}

fn lerp_ellipse(e0: &Ellipse, e1: &Ellipse, s: f64) -> Ellipse {
    let lerp = |a: f64, b: f64| a + (b - a) * s;
    // orientation is an axis: take the shorter way round modulo π
    let mut dphi = (e1.phi - e0.phi).rem_euclid(PI);
    if dphi > PI / 2.0 {
        dphi -= PI;
    }
    Ellipse::new(
        lerp(e0.cx, e1.cx),
        lerp(e0.cy, e1.cy),
        e0.phi + dphi * s,
        lerp(e0.a, e1.a),
        lerp(e0.b, e1.b),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(128, 128, |x, y| {
            let (dx, dy) = (f64::from(x) - cx, f64::from(y) - cy);
            dx * dx + dy * dy <= r * r
        })
    }

    fn landmarks(dx: f64) -> Vec<Vec2> {
        [(10.0, 10.0), (118.0, 10.0), (10.0, 118.0), (118.0, 118.0)]
            .iter()
            .map(|&(x, y)| Vec2::new(x + dx, y))
            .collect()
    }

    #[test]
    fn static_scene_is_constant() {
        let map = CoordinateMap::default();
        let pupils = vec![disc(64.0, 64.0, 10.0); 4];
        let irises = vec![disc(64.0, 64.0, 22.0); 4];
        let out = extract_anatomy(&pupils, &irises, &vec![landmarks(0.0); 4], &map).unwrap();
        assert!(out.states.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(out.states[0].globe_rotation.yaw, 0.0);
        assert_eq!(out.states[0].globe_rotation.pitch, 0.0);
    }

    #[test]
    fn pure_global_translation() {
        let map = CoordinateMap::default();
        let n = 4;
        let pupils: Vec<_> = (0..n).map(|t| disc(50.0 + 5.0 * t as f64, 64.0, 10.0)).collect();
        let irises: Vec<_> = (0..n).map(|t| disc(50.0 + 5.0 * t as f64, 64.0, 22.0)).collect();
        let tracks: Vec<_> = (0..n).map(|t| landmarks(5.0 * t as f64)).collect();
        let out = extract_anatomy(&pupils, &irises, &tracks, &map).unwrap();
        let step = map.image_vec_to_sim(Vec2::new(5.0, 0.0));
        for t in 1..n {
            let d = out.states[t].globe_translation - out.states[t - 1].globe_translation;
            assert!((d - step).norm() < 1e-9);
            assert!(out.states[t].globe_rotation.yaw.abs() < 1e-9);
            assert!(out.states[t].globe_rotation.pitch.abs() < 1e-9);
        }
    }

    #[test]
    fn pure_local_motion_gives_yaw() {
        let map = CoordinateMap::default();
        let irises = vec![disc(64.0, 64.0, 22.0); 2];
        let r = fit_ellipse_moments(&irises[0]).unwrap().a;
        // masks move by whole pixels, so shift by the integer nearest R/2
        let shift = (r / 2.0).round();
        let pupils = vec![disc(64.0, 64.0, 8.0), disc(64.0 + shift, 64.0, 8.0)];
        let out = extract_anatomy(&pupils, &irises, &vec![landmarks(0.0); 2], &map).unwrap();
        let expected = (shift / r).asin();
        assert!((out.states[1].globe_rotation.yaw - expected).abs() < 1e-12);
        assert!((expected - PI / 6.0).abs() < 0.03);
    }

    #[test]
    fn degenerate_frame_is_interpolated() {
        let map = CoordinateMap::default();
        let mut pupils = vec![disc(60.0, 64.0, 8.0), disc(62.0, 64.0, 8.0), disc(64.0, 64.0, 8.0)];
        pupils[1] = BinaryMask::new(128, 128);
        let irises = vec![disc(64.0, 64.0, 22.0); 3];
        let out = extract_anatomy(&pupils, &irises, &vec![landmarks(0.0); 3], &map).unwrap();
        assert!((out.pupil_centroids_px[1] - Vec2::new(62.0, 64.0)).norm() < 1e-9);
        assert_eq!(
            out.provenance,
            vec![ProvenanceEvent::Interpolated {
                frame: 1,
                field: "pupil".into()
            }]
        );
    }

    #[test]
    fn errors() {
        let map = CoordinateMap::default();
        assert!(matches!(
            extract_anatomy(&[], &[], &[], &map),
            Err(KinexError::EmptySequence)
        ));
        let empty = vec![BinaryMask::new(128, 128); 2];
        let irises = vec![disc(64.0, 64.0, 22.0); 2];
        assert!(matches!(
            extract_anatomy(&empty, &irises, &vec![landmarks(0.0); 2], &map),
            Err(KinexError::AllFramesDegenerate(_))
        ));
    }
}
