//! File formats and dataset assembly.
//!
//! Rasters are 8-bit PNGs, manifests JSON, and scripts and scene graphs
//! line-delimited JSON whose first line is a versioned header. Every loader
//! rejects a format version whose major number it does not know.

mod archive;
mod augment;
mod export;
mod jsonl;
mod raster;

pub use archive::{
    load_landmark_tracks, load_mask_archive, save_landmark_tracks, save_mask_archive, ArchiveManifest, MaskArchive,
};
pub use augment::{build_augmentation_pair, load_augmentation_manifest, save_augmentation_manifest, AugmentationEntry};
pub use export::{
    build_windows, export_paired_dataset, load_dataset_manifest, load_features, load_window, sequence_graphs,
    window_starts, DatasetManifest, ExportOptions, PairedWindow, WindowFrame, WindowSummary, EXPORT_FPS, WINDOW_LEN,
    WINDOW_STRIDE,
};
pub use jsonl::{
    load_graphs, load_script, read_graphs, read_script, save_graphs, save_script, write_graphs, write_script,
};
pub use raster::{decode_frame_png, decode_label_png, encode_frame_png, encode_label_png};

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::simulator::SimError;

/// Format version written by this crate for every file it owns.
pub const FORMAT_VERSION: &str = "1.0";
const FORMAT_MAJOR: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: corrupt: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{path}: format version {found} is not supported (major {supported})")]
    SchemaVersionMismatch {
        path: PathBuf,
        found: String,
        supported: u32,
    },
    #[error("frame {frame}: class id {class_id} is not in the class map")]
    UnknownClassId { frame: usize, class_id: u8 },
    #[error("script has {frames} frames, at least {required} are needed")]
    ScriptTooShort { frames: usize, required: usize },
    #[error("script runs at {fps} fps, windows require {required}")]
    UnsupportedFps { fps: f64, required: f64 },
    #[error("motion source has no phase labels")]
    MissingLabels,
    #[error("{0} is locked by another writer")]
    Locked(PathBuf),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl DataError {
    /// Variant name; wrapped simulator errors report their own kind.
    pub fn kind(&self) -> &'static str {
        match self {
            DataError::Io { .. } => "Io",
            DataError::Corrupt { .. } => "Corrupt",
            DataError::SchemaVersionMismatch { .. } => "SchemaVersionMismatch",
            DataError::UnknownClassId { .. } => "UnknownClassId",
            DataError::ScriptTooShort { .. } => "ScriptTooShort",
            DataError::UnsupportedFps { .. } => "UnsupportedFps",
            DataError::MissingLabels => "MissingLabels",
            DataError::Locked(_) => "Locked",
            DataError::Invalid(_) => "Invalid",
            DataError::Sim(e) => e.kind(),
        }
    }
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |e| DataError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub(crate) fn corrupt(path: &Path, reason: impl std::fmt::Display) -> DataError {
    DataError::Corrupt {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Accepts `"<major>"` or `"<major>.<minor>"` with the known major.
pub(crate) fn check_version(path: &Path, found: &str) -> Result<()> {
    let major = found.split('.').next().and_then(|m| m.parse::<u32>().ok());
    match major {
        Some(FORMAT_MAJOR) => Ok(()),
        Some(_) => Err(DataError::SchemaVersionMismatch {
            path: path.to_path_buf(),
            found: found.to_string(),
            supported: FORMAT_MAJOR,
        }),
        None => Err(corrupt(path, format!("unreadable format version `{found}`"))),
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| corrupt(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Reads a JSON document whose `format_version` field is checked before the
/// rest is decoded, so version errors take precedence over shape errors.
pub(crate) fn read_versioned_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| corrupt(path, e))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| corrupt(path, "missing format_version"))?;
    check_version(path, version)?;
    serde_json::from_value(value).map_err(|e| corrupt(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_majors() {
        let p = Path::new("x.json");
        assert!(check_version(p, "1.0").is_ok());
        assert!(check_version(p, "1.7").is_ok());
        assert!(check_version(p, "1").is_ok());
        assert!(matches!(
            check_version(p, "2.0"),
            Err(DataError::SchemaVersionMismatch { .. })
        ));
        assert!(matches!(check_version(p, "v1"), Err(DataError::Corrupt { .. })));
    }
}
