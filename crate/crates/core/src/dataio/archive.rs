//! Mask archives (PNG label rasters plus a JSON manifest) and landmark tracks.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::raster::{decode_label_png, encode_label_png};
use super::{corrupt, read_bytes, read_versioned_json, write_bytes, write_json, DataError, Result, FORMAT_VERSION};
use crate::geometry::Vec2;
use crate::renderer::{LabelRaster, BACKGROUND};

const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub format_version: String,
    pub video_id: String,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    /// Names of every non-background class id that may appear.
    pub class_names: BTreeMap<u8, String>,
    pub frame_count: usize,
    /// Raster paths relative to the archive directory.
    pub frames: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskArchive {
    pub manifest: ArchiveManifest,
    pub rasters: Vec<LabelRaster>,
}

impl MaskArchive {
    /// Builds an archive with frames named `masks/000000.png`, … .
    pub fn new(
        video_id: impl Into<String>,
        fps: f64,
        class_names: BTreeMap<u8, String>,
        rasters: Vec<LabelRaster>,
    ) -> Result<Self> {
        let (width, height) = rasters
            .first()
            .map(|r| (r.width, r.height))
            .ok_or_else(|| DataError::Invalid("archive needs at least one raster".into()))?;
        let manifest = ArchiveManifest {
            format_version: FORMAT_VERSION.into(),
            video_id: video_id.into(),
            fps,
            width,
            height,
            class_names,
            frame_count: rasters.len(),
            frames: (0..rasters.len()).map(|i| format!("masks/{i:06}.png")).collect(),
        };
        let archive = Self { manifest, rasters };
        archive.validate(Path::new("<memory>"))?;
        Ok(archive)
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let m = &self.manifest;
        if m.frame_count != self.rasters.len() || m.frames.len() != m.frame_count {
            return Err(corrupt(
                path,
                format!(
                    "frame_count {} but {} paths and {} rasters",
                    m.frame_count,
                    m.frames.len(),
                    self.rasters.len()
                ),
            ));
        }
        if !(m.fps > 0.0 && m.fps.is_finite()) {
            return Err(corrupt(path, format!("fps {}", m.fps)));
        }
        for (frame, r) in self.rasters.iter().enumerate() {
            if (r.width, r.height) != (m.width, m.height) {
                return Err(corrupt(
                    path,
                    format!(
                        "frame {frame} is {}x{}, manifest says {}x{}",
                        r.width, r.height, m.width, m.height
                    ),
                ));
            }
            if let Some(class_id) = r
                .classes()
                .into_iter()
                .find(|c| *c != BACKGROUND && !m.class_names.contains_key(c))
            {
                return Err(DataError::UnknownClassId { frame, class_id });
            }
        }
        Ok(())
    }
}

pub fn save_mask_archive(archive: &MaskArchive, dir: &Path) -> Result<()> {
    archive.validate(dir)?;
    for (rel, raster) in archive.manifest.frames.iter().zip(&archive.rasters) {
        write_bytes(&dir.join(rel), &encode_label_png(raster))?;
    }
    write_json(&dir.join(MANIFEST), &archive.manifest)
}

/// Loads and validates an archive directory.
pub fn load_mask_archive(dir: &Path) -> Result<MaskArchive> {
    let manifest_path = dir.join(MANIFEST);
    let manifest: ArchiveManifest = read_versioned_json(&manifest_path)?;
    if manifest.frames.len() != manifest.frame_count {
        return Err(corrupt(
            &manifest_path,
            format!(
                "frame_count {} but {} frame paths",
                manifest.frame_count,
                manifest.frames.len()
            ),
        ));
    }
    let rasters = manifest
        .frames
        .iter()
        .map(|rel| {
            let path = dir.join(rel);
            decode_label_png(&read_bytes(&path)?, &path)
        })
        .collect::<Result<Vec<_>>>()?;
    let archive = MaskArchive { manifest, rasters };
    archive.validate(&manifest_path)?;
    Ok(archive)
}

#[derive(Serialize, Deserialize)]
struct LandmarkFile {
    format_version: String,
    frames: Vec<Vec<Vec2>>,
}

pub fn save_landmark_tracks(tracks: &[Vec<Vec2>], path: &Path) -> Result<()> {
    write_json(
        path,
        &LandmarkFile {
            format_version: FORMAT_VERSION.into(),
            frames: tracks.to_vec(),
        },
    )
}

/// Per-frame landmark points in pixels. Every frame must list the same
/// number of finite points.
pub fn load_landmark_tracks(path: &Path) -> Result<Vec<Vec<Vec2>>> {
    let file: LandmarkFile = read_versioned_json(path)?;
    if let Some(first) = file.frames.first() {
        for (i, f) in file.frames.iter().enumerate() {
            if f.len() != first.len() {
                return Err(corrupt(
                    path,
                    format!("frame {i} has {} points, frame 0 has {}", f.len(), first.len()),
                ));
            }
            if f.iter().any(|p| !p.is_finite()) {
                return Err(corrupt(path, format!("frame {i} has a non-finite point")));
            }
        }
    }
    Ok(file.frames)
}
