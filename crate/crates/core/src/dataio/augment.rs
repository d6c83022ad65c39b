//! Style-transfer pairing manifest: appearance from one video, motion and
//! phase labels from another.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_versioned_json, write_json, DataError, Result, FORMAT_VERSION};
use crate::kinex::{KinematicScript, Phase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationEntry {
    pub style_video_id: String,
    /// Reference to the first frame of the style video.
    pub style_first_frame: String,
    pub motion_source_id: String,
    pub frame_count: usize,
    pub phase_labels: Vec<Phase>,
    /// Style and motion come from the same video.
    pub identity_pair: bool,
}

pub fn build_augmentation_pair(
    style_video_id: &str,
    style_first_frame: &str,
    motion_source: &KinematicScript,
) -> Result<AugmentationEntry> {
    let labels = motion_source.phase_labels.clone().ok_or(DataError::MissingLabels)?;
    Ok(AugmentationEntry {
        style_video_id: style_video_id.to_string(),
        style_first_frame: style_first_frame.to_string(),
        motion_source_id: motion_source.source_id.clone(),
        frame_count: motion_source.len(),
        phase_labels: labels,
        identity_pair: style_video_id == motion_source.source_id,
    })
}

#[derive(Serialize, Deserialize)]
struct AugmentationManifest {
    format_version: String,
    entries: Vec<AugmentationEntry>,
}

pub fn save_augmentation_manifest(entries: &[AugmentationEntry], path: &Path) -> Result<()> {
    write_json(
        path,
        &AugmentationManifest {
            format_version: FORMAT_VERSION.into(),
            entries: entries.to_vec(),
        },
    )
}

pub fn load_augmentation_manifest(path: &Path) -> Result<Vec<AugmentationEntry>> {
    read_versioned_json::<AugmentationManifest>(path).map(|m| m.entries)
}
