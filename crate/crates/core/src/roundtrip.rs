//! Render → extract → compare self-test.
//!
//! [`scenario`] builds a seeded script with mixed instruments, globe drift,
//! yaw/pitch and articulation. [`run_roundtrip`] renders it, recovers a
//! script from the rasters alone (plus synthetic landmark tracks that follow
//! the globe), replays the recovered script and reports the errors.

use std::f64::consts::{PI, TAU};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, CoordinateMap, Ellipse, GlobeRotation, Vec2};
use crate::kinex::{
    extract_script, AnatomyState, ExtractOptions, KinematicScript, KinexError, Phase, ScriptFrame, ToolClass, ToolKind,
    ToolState,
};
use crate::renderer::{class_iou, LabelRaster};
use crate::simulator::{SimError, Simulator};

#[derive(Debug, Error)]
pub enum RoundtripError {
    #[error(transparent)]
    Kinex(#[from] KinexError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("frames must be at least 1")]
    NoFrames,
}

/// Pass thresholds for one round trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub centroid_px: f64,
    pub tip_px: f64,
    pub orientation_deg: f64,
    pub articulation_deg: f64,
    pub replay_iou: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            centroid_px: 1.5,
            tip_px: 2.0,
            orientation_deg: 3.0,
            articulation_deg: 4.0,
            replay_iou: 0.9,
        }
    }
}

/// Mean and maximum of an error series.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub max: f64,
    pub count: usize,
}

impl ErrorStats {
    fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        Self {
            mean: samples.iter().sum::<f64>() / samples.len() as f64,
            max: samples.iter().copied().fold(0.0, f64::max),
            count: samples.len(),
        }
    }

    fn merge(parts: &[ErrorStats]) -> Self {
        let count: usize = parts.iter().map(|p| p.count).sum();
        if count == 0 {
            return Self::default();
        }
        Self {
            mean: parts.iter().map(|p| p.mean * p.count as f64).sum::<f64>() / count as f64,
            max: parts.iter().map(|p| p.max).fold(0.0, f64::max),
            count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub seeds: Vec<u64>,
    pub frames: usize,
    pub pupil_centroid_px: ErrorStats,
    pub iris_centroid_px: ErrorStats,
    pub tip_px: ErrorStats,
    pub orientation_deg: ErrorStats,
    pub opening_deg: ErrorStats,
    pub bend_deg: ErrorStats,
    /// Smallest per-class IoU between original and replayed rasters.
    pub min_replay_iou: f64,
    pub frames_below_iou: usize,
}

impl RoundtripReport {
    /// Mean errors within tolerance and every replayed frame above the IoU bound.
    pub fn passes(&self, tol: &Tolerances) -> bool {
        self.pupil_centroid_px.mean <= tol.centroid_px
            && self.iris_centroid_px.mean <= tol.centroid_px
            && self.tip_px.mean <= tol.tip_px
            && self.orientation_deg.mean <= tol.orientation_deg
            && self.opening_deg.mean <= tol.articulation_deg
            && self.bend_deg.mean <= tol.articulation_deg
            && self.min_replay_iou >= tol.replay_iou
    }

    pub fn merge(reports: &[RoundtripReport]) -> Self {
        let pick =
            |f: fn(&RoundtripReport) -> ErrorStats| ErrorStats::merge(&reports.iter().map(f).collect::<Vec<_>>());
        Self {
            seeds: reports.iter().flat_map(|r| r.seeds.iter().copied()).collect(),
            frames: reports.iter().map(|r| r.frames).sum(),
            pupil_centroid_px: pick(|r| r.pupil_centroid_px),
            iris_centroid_px: pick(|r| r.iris_centroid_px),
            tip_px: pick(|r| r.tip_px),
            orientation_deg: pick(|r| r.orientation_deg),
            opening_deg: pick(|r| r.opening_deg),
            bend_deg: pick(|r| r.bend_deg),
            min_replay_iou: reports.iter().map(|r| r.min_replay_iou).fold(1.0, f64::min),
            frames_below_iou: reports.iter().map(|r| r.frames_below_iou).sum(),
        }
    }

    /// Plain-text error table.
    pub fn table(&self, tol: &Tolerances) -> String {
        let mut out = format!(
            "{:<18} {:>10} {:>10} {:>10} {:>8}\n",
            "quantity", "mean", "max", "limit", "samples"
        );
        let rows = [
            ("pupil centroid px", self.pupil_centroid_px, tol.centroid_px),
            ("iris centroid px", self.iris_centroid_px, tol.centroid_px),
            ("tool tip px", self.tip_px, tol.tip_px),
            ("orientation deg", self.orientation_deg, tol.orientation_deg),
            ("opening deg", self.opening_deg, tol.articulation_deg),
            ("bend deg", self.bend_deg, tol.articulation_deg),
        ];
        for (name, s, limit) in rows {
            out += &format!(
                "{name:<18} {:>10.4} {:>10.4} {:>10.4} {:>8}\n",
                s.mean, s.max, limit, s.count
            );
        }
        out += &format!(
            "{:<18} {:>10.4} {:>10} {:>10.4} {:>8}\n",
            "min replay IoU", self.min_replay_iou, "", tol.replay_iou, self.frames_below_iou
        );
        out
    }
}

/// Fixed image landmarks shifted by the globe displacement.
pub fn landmark_tracks(script: &KinematicScript, map: &CoordinateMap) -> Vec<Vec<Vec2>> {
    let (w, h) = (f64::from(map.image_width), f64::from(map.image_height));
    let base = [
        Vec2::new(0.08 * w, 0.08 * h),
        Vec2::new(0.92 * w, 0.08 * h),
        Vec2::new(0.08 * w, 0.92 * h),
        Vec2::new(0.92 * w, 0.92 * h),
    ];
    let Some(first) = script.frames.first() else {
        return Vec::new();
    };
    let origin = first.anatomy.globe_translation;
    script
        .frames
        .iter()
        .map(|f| {
            let shift = map.sim_vec_to_image(f.anatomy.globe_translation - origin);
            base.iter().map(|&p| p + shift).collect()
        })
        .collect()
}

/// Seeded scenario with one or two instruments working near the pupil.
pub fn scenario(seed: u64, frames: usize) -> KinematicScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = frames.max(1);
    let iris_a = rng.random_range(0.33..0.40);
    let iris = Ellipse::new(
        0.0,
        0.0,
        rng.random_range(0.0..PI),
        iris_a,
        iris_a * rng.random_range(0.95..1.0),
    );
    let pupil_a = rng.random_range(0.14..0.19);
    let pupil = Ellipse::new(
        0.0,
        0.0,
        rng.random_range(0.0..PI),
        pupil_a,
        pupil_a * rng.random_range(0.93..1.0),
    );
    let globe0 = Vec2::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
    let drift = Vec2::new(rng.random_range(-0.07..0.07), rng.random_range(-0.07..0.07));
    let drift_phase = rng.random_range(0.0..TAU);
    let (yaw_amp, pitch_amp) = (rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
    let rot_freq = rng.random_range(0.5..1.5);

    let mut classes = ToolClass::BUILTIN.to_vec();
    classes.shuffle(&mut rng);
    let tool_count = rng.random_range(1..=2usize);
    let mut classes: Vec<ToolClass> = classes.into_iter().take(tool_count).collect();
    classes.sort();
    let entry0 = rng.random_range(0.0..TAU);
    struct Track {
        class: ToolClass,
        entry: f64,
        reach: (f64, f64),
        wobble: (f64, f64),
        articulation: (f64, f64, f64),
        appears: usize,
    }
    let tracks: Vec<Track> = classes
        .iter()
        .enumerate()
        .map(|(i, &class)| {
            let entry = entry0 + i as f64 * PI + rng.random_range(-0.3..0.3);
            let articulation = match class.default_kind() {
                ToolKind::Forceps => (
                    rng.random_range(0.2..0.5),
                    rng.random_range(0.0..0.1),
                    rng.random_range(0.0..TAU),
                ),
                ToolKind::Angled => (
                    rng.random_range(-0.35..0.35),
                    rng.random_range(0.0..0.1),
                    rng.random_range(0.0..TAU),
                ),
                ToolKind::Straight => (0.0, 0.0, 0.0),
            };
            Track {
                class,
                entry,
                reach: (rng.random_range(0.05..0.15), rng.random_range(0.05..0.15)),
                wobble: (rng.random_range(0.0..0.15), rng.random_range(0.0..TAU)),
                articulation,
                appears: if i == 0 { 0 } else { n / 4 },
            }
        })
        .collect();

    let mut out_frames = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);
    for k in 0..n {
        let s = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
        let wave = (TAU * rot_freq * s).sin();
        let anatomy = AnatomyState {
            globe_translation: globe0 + drift * ((TAU * s + drift_phase).sin() - drift_phase.sin()),
            globe_rotation: GlobeRotation::new(yaw_amp * wave, pitch_amp * wave),
            iris,
            pupil,
        };
        let centre = anatomy.world_pupil().center();
        let tools: Vec<ToolState> = tracks
            .iter()
            .map(|t| {
                let out = Vec2::new(t.entry.cos(), -t.entry.sin());
                let reach = t.reach.0 + (t.reach.1 - t.reach.0) * s;
                let tip = centre + out * reach;
                let orientation = wrap_angle((-out).angle() + t.wobble.0 * (TAU * s + t.wobble.1).sin());
                let (base, swing, phase) = t.articulation;
                let value = base + swing * (TAU * s + phase).sin();
                let mut tool = ToolState::new(t.class, tip, orientation);
                tool = match t.class.default_kind() {
                    ToolKind::Forceps => tool.with_articulation(0.0, value),
                    ToolKind::Angled => tool.with_articulation(value, 0.0),
                    ToolKind::Straight => tool,
                };
                tool.articulation = tool.articulation.clamped();
                tool.present = k >= t.appears;
                tool
            })
            .collect();
        let lead = tools.iter().filter(|t| t.present).map(|t| t.tool_class).max();
        phases.push(lead.map(Phase::for_tool).unwrap_or(Phase::Idle));
        out_frames.push(ScriptFrame { anatomy, tools });
    }
    let mut script = KinematicScript::new(4.0, out_frames, format!("roundtrip:seed={seed}"));
    script.phase_labels = Some(phases);
    script
}

fn angle_diff_deg(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs().to_degrees()
}

/// Worst per-class IoU over every class present in either raster.
pub fn min_class_iou(a: &LabelRaster, b: &LabelRaster) -> f64 {
    let mut classes = a.classes();
    classes.extend(b.classes());
    classes.sort_unstable();
    classes.dedup();
    classes
        .into_iter()
        .filter(|&c| c != 0)
        .filter_map(|c| class_iou(a, b, c))
        .fold(1.0, f64::min)
}

/// Compares a recovered script with its source and replays it.
pub fn evaluate(
    truth: &KinematicScript,
    truth_rasters: &[LabelRaster],
    recovered: &KinematicScript,
    sim: &Simulator,
    tol: &Tolerances,
) -> Result<RoundtripReport, RoundtripError> {
    let map = sim.map();
    let px = |p: Vec2| map.sim_to_image(p);
    let (mut pupil, mut iris, mut tip, mut orient, mut opening, mut bend) =
        (vec![], vec![], vec![], vec![], vec![], vec![]);
    for (t, r) in truth.frames.iter().zip(&recovered.frames) {
        pupil.push((px(t.anatomy.world_pupil().center()) - px(r.anatomy.world_pupil().center())).norm());
        iris.push((px(t.anatomy.world_iris().center()) - px(r.anatomy.world_iris().center())).norm());
        for tt in t.tools.iter().filter(|t| t.present) {
            let Some(rt) = r.tools.iter().find(|x| x.tool_class == tt.tool_class && x.present) else {
                continue;
            };
            tip.push((px(tt.tip) - px(rt.tip)).norm());
            orient.push(angle_diff_deg(tt.orientation, rt.orientation));
            match tt.tool_class.default_kind() {
                ToolKind::Forceps => opening.push(
                    (tt.articulation.opening_angle - rt.articulation.opening_angle)
                        .abs()
                        .to_degrees(),
                ),
                ToolKind::Angled => bend.push(angle_diff_deg(tt.articulation.bend_angle, rt.articulation.bend_angle)),
                ToolKind::Straight => {}
            }
        }
    }
    let (_, replayed) = sim.replay(recovered)?;
    let ious: Vec<f64> = truth_rasters
        .iter()
        .zip(&replayed)
        .map(|(a, b)| min_class_iou(a, b))
        .collect();
    Ok(RoundtripReport {
        seeds: Vec::new(),
        frames: truth.len(),
        pupil_centroid_px: ErrorStats::from_samples(&pupil),
        iris_centroid_px: ErrorStats::from_samples(&iris),
        tip_px: ErrorStats::from_samples(&tip),
        orientation_deg: ErrorStats::from_samples(&orient),
        opening_deg: ErrorStats::from_samples(&opening),
        bend_deg: ErrorStats::from_samples(&bend),
        min_replay_iou: ious.iter().copied().fold(1.0, f64::min),
        frames_below_iou: ious.iter().filter(|&&v| v < tol.replay_iou).count(),
    })
}

/// Renders the seeded scenario, extracts it back and reports the errors.
pub fn run_roundtrip(
    seed: u64,
    frames: usize,
    map: CoordinateMap,
    tol: &Tolerances,
) -> Result<RoundtripReport, RoundtripError> {
    if frames == 0 {
        return Err(RoundtripError::NoFrames);
    }
    let sim = Simulator::with_map(map);
    let truth = scenario(seed, frames);
    let (_, rasters) = sim.replay(&truth)?;
    let tracks = landmark_tracks(&truth, &map);
    let options = ExtractOptions {
        source_id: truth.source_id.clone(),
        ..ExtractOptions::default()
    };
    let recovered = extract_script(&rasters, &tracks, &map, &options)?;
    let mut report = evaluate(&truth, &rasters, &recovered, &sim, tol)?;
    report.seeds = vec![seed];
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_is_valid_and_seeded() {
        let a = scenario(5, 20);
        a.validate().unwrap();
        assert_eq!(a, scenario(5, 20));
        assert_ne!(a, scenario(6, 20));
        assert_eq!(a.frames[0].anatomy.globe_rotation, GlobeRotation::default());
    }

    #[test]
    fn short_roundtrip_within_tolerance() {
        let tol = Tolerances::default();
        let report = run_roundtrip(1, 8, CoordinateMap::default(), &tol).unwrap();
        assert!(report.passes(&tol), "{}", report.table(&tol));
    }
}
