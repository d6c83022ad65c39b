//! Inverse pairing: recovering anatomy and tool kinematics from label
//! rasters and landmark tracks.

mod anatomy;
mod model;
mod refine;
mod script;
mod tool;

pub use anatomy::{extract_anatomy, extract_anatomy_occluded, AnatomyExtraction};
pub use model::*;
pub use refine::{refine_ellipse, refine_tool, Silhouette};
pub use script::{assemble_script, KinematicScript, ProvenanceEvent, ScriptFrame, SCRIPT_FORMAT_VERSION};
pub use tool::{
    carry_forward, extract_tool, extract_tool_with_kind, extreme_pixel, measure_tool, ToolExtraction, ToolMeasurement,
    MIN_TOOL_PIXELS, TIP_SEGMENT_FRACTION,
};

use thiserror::Error;

use crate::geometry::{CoordinateMap, GeometryError, Vec2};
use crate::renderer::{LabelRaster, ToolLibrary, IRIS, PUPIL, TOOL_BASE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinexError {
    #[error("empty sequence")]
    EmptySequence,
    #[error("no frame yields a valid {0} fit")]
    AllFramesDegenerate(String),
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch { what: String, expected: usize, got: usize },
    #[error("invariant violated at frame {frame}: {field}")]
    InvariantViolation { frame: usize, field: String },
    #[error("raster {frame} is {got:?}, expected {expected:?}")]
    ResolutionMismatch {
        frame: usize,
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl KinexError {
    pub fn kind(&self) -> &'static str {
        match self {
            KinexError::EmptySequence => "EmptySequence",
            KinexError::AllFramesDegenerate(_) => "AllFramesDegenerate",
            KinexError::LengthMismatch { .. } => "LengthMismatch",
            KinexError::InvariantViolation { .. } => "InvariantViolation",
            KinexError::ResolutionMismatch { .. } => "ResolutionMismatch",
            KinexError::Geometry(_) => "Geometry",
        }
    }
}

/// Settings for [`extract_script`].
#[derive(Debug, Clone)]
pub struct ExtractOptions {
    pub fps: f64,
    pub source_id: String,
    /// Polish anatomy fits around occluding instruments and each present
    /// tool frame against its instrument template.
    pub refine: bool,
    pub library: ToolLibrary,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            fps: 4.0,
            source_id: String::new(),
            refine: true,
            library: ToolLibrary::builtin(),
        }
    }
}

/// Full inverse-pairing pipeline over a sequence of label rasters.
///
/// The pupil mask is class 3, the iris mask classes 2 and 3 together, and
/// every tool label present in any frame yields one tool track.
pub fn extract_script(
    rasters: &[LabelRaster],
    landmark_tracks: &[Vec<Vec2>],
    map: &CoordinateMap,
    options: &ExtractOptions,
) -> Result<KinematicScript, KinexError> {
    if rasters.is_empty() {
        return Err(KinexError::EmptySequence);
    }
    let expected = (map.image_width, map.image_height);
    for (i, r) in rasters.iter().enumerate() {
        if (r.width, r.height) != expected {
            return Err(KinexError::ResolutionMismatch {
                frame: i,
                expected,
                got: (r.width, r.height),
            });
        }
    }
    let pupils: Vec<_> = rasters.iter().map(|r| r.class_mask(PUPIL)).collect();
    let irises: Vec<_> = rasters.iter().map(|r| r.mask(|c| c == IRIS || c == PUPIL)).collect();
    let anatomy = if options.refine {
        let occluders: Vec<_> = rasters.iter().map(|r| r.mask(|c| c >= TOOL_BASE)).collect();
        extract_anatomy_occluded(&pupils, &irises, &occluders, landmark_tracks, map)?
    } else {
        extract_anatomy(&pupils, &irises, landmark_tracks, map)?
    };
    let mut provenance = anatomy.provenance;

    let mut labels = [false; 256];
    for r in rasters {
        for &c in &r.labels {
            labels[c as usize] = true;
        }
    }
    let mut tracks = Vec::new();
    for label in TOOL_BASE..=u8::MAX {
        if !labels[label as usize] {
            continue;
        }
        let class = ToolClass::from_label(label).expect("tool label");
        let kind = options.library.kind(class);
        let masks: Vec<_> = rasters.iter().map(|r| r.class_mask(label)).collect();
        let measured: Vec<Option<ToolMeasurement>> = masks
            .iter()
            .zip(&anatomy.pupil_centroids_px)
            .zip(rasters)
            .map(|((m, &p), raster)| {
                let m = measure_tool(m, kind, p)?;
                if !options.refine {
                    return Some(m);
                }
                let initial = ToolState {
                    tool_class: class,
                    tip: map.image_to_sim(m.tip_px),
                    orientation: m.orientation,
                    articulation: m.articulation,
                    present: true,
                };
                let r = refine_tool(&initial, kind, raster, options.library.get(class), map);
                Some(ToolMeasurement {
                    tip_px: map.sim_to_image(r.tip),
                    orientation: r.orientation,
                    articulation: r.articulation,
                })
            })
            .collect();
        let track = carry_forward(&measured, class, map);
        provenance.extend(track.provenance);
        tracks.push(track.states);
    }
    let mut script = assemble_script(anatomy.states, tracks, options.fps, None, options.source_id.clone())?;
    provenance.append(&mut script.provenance);
    script.provenance = provenance;
    Ok(script)
}
