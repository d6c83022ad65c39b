//! Paired-window dataset export.
//!
//! A script is replayed, every frame is rendered and turned into a scene
//! graph, and the sequence is cut into 16-frame windows that advance by 15
//! frames, so each window after the first starts on its predecessor's last
//! frame. Trailing frames that do not fill a window are dropped and counted
//! in the manifest.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json            dataset manifest
//! script.jsonl             the source script
//! windows/w0000/window.json
//! windows/w0000/labels/000000.png   label raster per frame (global index)
//! windows/w0000/frames/000000.png   flat-shaded RGB frame
//! windows/w0000/graphs.jsonl
//! windows/w0000/features.npy        float32 [16, max_nodes * block_len]
//! windows/w0000/features.json
//! ```

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::jsonl::{load_graphs, save_graphs, save_script};
use super::raster::{decode_frame_png, decode_label_png, encode_frame_png, encode_label_png};
use super::{
    corrupt, io_err, read_bytes, read_versioned_json, write_bytes, write_json, DataError, Result, FORMAT_VERSION,
};
use crate::geometry::CoordinateMap;
use crate::kinex::{KinematicScript, Phase};
use crate::renderer::{incoming_flow, LabelRaster, SimFrame};
use crate::scenegraph::{build_graph, graph_features, FeatureLayout, GraphFeatures, SceneGraph};
use crate::simulator::{SimError, SimState, Simulator};

pub const WINDOW_LEN: usize = 16;
pub const WINDOW_STRIDE: usize = WINDOW_LEN - 1;
pub const EXPORT_FPS: f64 = 4.0;

const LOCK_FILE: &str = ".export.lock";

#[derive(Debug, Clone, PartialEq)]
pub struct WindowFrame {
    pub frame_index: usize,
    pub labels: LabelRaster,
    pub sim_frame: SimFrame,
    pub graph: SceneGraph,
    pub phase: Option<Phase>,
    pub real_frame: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedWindow {
    pub window_id: String,
    pub start_frame: usize,
    pub fps: f64,
    pub first_frame_overlap: bool,
    pub frames: Vec<WindowFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub window_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub first_frame_overlap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    pub source_id: String,
    pub fps: f64,
    pub frame_count: usize,
    pub window_len: usize,
    pub window_stride: usize,
    pub resolution: (u32, u32),
    pub sim_scale: f64,
    pub dropped_tail_frames: usize,
    pub windows: Vec<WindowSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<BTreeMap<String, Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExportOptions {
    /// Node capacity of the feature vectors; `0` selects 32.
    pub max_nodes: usize,
    /// Opaque per-frame references to real footage, one per script frame.
    pub real_frames: Option<Vec<String>>,
    /// Named split lists recorded verbatim in the manifest.
    pub splits: Option<BTreeMap<String, Vec<String>>>,
}

impl ExportOptions {
    fn capacity(&self) -> usize {
        if self.max_nodes == 0 {
            32
        } else {
            self.max_nodes
        }
    }
}

/// Start frames of every full window over `frame_count` frames.
pub fn window_starts(frame_count: usize) -> Result<Vec<usize>> {
    if frame_count < WINDOW_LEN {
        return Err(DataError::ScriptTooShort {
            frames: frame_count,
            required: WINDOW_LEN,
        });
    }
    Ok((0..=frame_count - WINDOW_LEN).step_by(WINDOW_STRIDE).collect())
}

fn window_id(k: usize) -> String {
    format!("w{k:04}")
}

/// Replays the script and cuts it into windows in memory.
pub fn build_windows(
    script: &KinematicScript,
    sim: &Simulator,
    real_frames: Option<&[String]>,
) -> Result<Vec<PairedWindow>> {
    script.validate().map_err(|e| DataError::Invalid(e.to_string()))?;
    let starts = window_starts(script.len())?;
    if script.fps != EXPORT_FPS {
        return Err(DataError::UnsupportedFps {
            fps: script.fps,
            required: EXPORT_FPS,
        });
    }
    if let Some(r) = real_frames {
        if r.len() != script.len() {
            return Err(DataError::Invalid(format!(
                "{} real frame references for {} frames",
                r.len(),
                script.len()
            )));
        }
    }
    let used = starts.last().map_or(0, |s| s + WINDOW_LEN);
    let (states, rasters) = sim.replay(&KinematicScript {
        frames: script.frames[..used].to_vec(),
        phase_labels: None,
        provenance: Vec::new(),
        ..script.clone()
    })?;
    let graphs = sequence_graphs(sim, &states, &rasters)?;
    let frames: Vec<WindowFrame> = graphs
        .into_iter()
        .enumerate()
        .map(|(i, graph)| WindowFrame {
            frame_index: i,
            sim_frame: SimFrame::from_labels(&rasters[i]),
            labels: rasters[i].clone(),
            graph,
            phase: script.phase_labels.as_ref().map(|p| p[i].clone()),
            real_frame: real_frames.map(|r| r[i].clone()),
        })
        .collect();
    Ok(starts
        .iter()
        .enumerate()
        .map(|(k, &s)| PairedWindow {
            window_id: window_id(k),
            start_frame: s,
            fps: EXPORT_FPS,
            first_frame_overlap: k > 0,
            frames: frames[s..s + WINDOW_LEN].to_vec(),
        })
        .collect())
}

/// Scene graph of every frame of a replayed sequence, with flow measured
/// from the previous frame.
pub fn sequence_graphs(sim: &Simulator, states: &[SimState], rasters: &[LabelRaster]) -> Result<Vec<SceneGraph>> {
    if states.len() != rasters.len() {
        return Err(DataError::Invalid(format!(
            "{} states for {} rasters",
            states.len(),
            rasters.len()
        )));
    }
    (0..states.len())
        .map(|i| {
            let flow = incoming_flow(
                i.checked_sub(1).map(|p| &states[p]),
                &states[i],
                &rasters[i],
                &sim.renderer,
            )
            .map_err(|e| SimError::InvalidState(e.to_string()))?;
            build_graph(i as u64, &rasters[i], &flow).map_err(|e| DataError::Invalid(e.to_string()))
        })
        .collect()
}

/// Feature vocabulary: anatomy, built-in instruments, and any further tool
/// class the script uses.
fn layout_for(script: &KinematicScript) -> FeatureLayout {
    let mut layout = FeatureLayout::default();
    for t in script.frames.iter().flat_map(|f| &f.tools) {
        let label = t.tool_class.label();
        if !layout.classes.contains(&label) {
            layout.classes.push(label);
        }
    }
    layout
}

struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(DataError::Locked(dir.to_path_buf())),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Serialize, Deserialize)]
struct WindowFile {
    format_version: String,
    window_id: String,
    start_frame: usize,
    fps: f64,
    first_frame_overlap: bool,
    frames: Vec<WindowFrameFile>,
}

#[derive(Serialize, Deserialize)]
struct WindowFrameFile {
    frame_index: usize,
    labels: String,
    sim_frame: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase: Option<Phase>,
    #[serde(default)]
    real_frame: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct FeatureSidecar {
    format_version: String,
    layout_version: String,
    max_nodes: usize,
    block_len: usize,
    class_vocab: Vec<u8>,
    frame_indices: Vec<u64>,
    node_counts: Vec<usize>,
}

fn write_window(dir: &Path, w: &PairedWindow, layout: &FeatureLayout, max_nodes: usize) -> Result<()> {
    let mut entries = Vec::with_capacity(w.frames.len());
    let mut features = Vec::with_capacity(w.frames.len());
    for f in &w.frames {
        let labels = format!("labels/{:06}.png", f.frame_index);
        let sim_frame = format!("frames/{:06}.png", f.frame_index);
        write_bytes(&dir.join(&labels), &encode_label_png(&f.labels))?;
        write_bytes(&dir.join(&sim_frame), &encode_frame_png(&f.sim_frame))?;
        features.push(
            graph_features(&f.graph, max_nodes, layout)
                .map_err(|e| DataError::Invalid(format!("frame {}: {e}", f.frame_index)))?,
        );
        entries.push(WindowFrameFile {
            frame_index: f.frame_index,
            labels,
            sim_frame,
            phase: f.phase.clone(),
            real_frame: f.real_frame.clone(),
        });
    }
    let graphs: Vec<SceneGraph> = w.frames.iter().map(|f| f.graph.clone()).collect();
    save_graphs(&graphs, &dir.join("graphs.jsonl"))?;

    let block = layout.block_len();
    let flat: Vec<f32> = features.iter().flat_map(|f| f.values.iter().copied()).collect();
    let array =
        Array2::from_shape_vec((features.len(), max_nodes * block), flat).expect("feature rows have equal length");
    let npy = dir.join("features.npy");
    ndarray_npy::write_npy(&npy, &array).map_err(|e| DataError::Io {
        path: npy.clone(),
        message: e.to_string(),
    })?;
    write_json(
        &dir.join("features.json"),
        &FeatureSidecar {
            format_version: FORMAT_VERSION.into(),
            layout_version: crate::scenegraph::FEATURE_LAYOUT_VERSION.into(),
            max_nodes,
            block_len: block,
            class_vocab: layout.classes.clone(),
            frame_indices: features.iter().map(|f| f.frame_index).collect(),
            node_counts: features.iter().map(|f| f.node_count).collect(),
        },
    )?;
    write_json(
        &dir.join("window.json"),
        &WindowFile {
            format_version: FORMAT_VERSION.into(),
            window_id: w.window_id.clone(),
            start_frame: w.start_frame,
            fps: w.fps,
            first_frame_overlap: w.first_frame_overlap,
            frames: entries,
        },
    )
}

/// Writes the paired dataset for `script` under `out`.
///
/// The directory is locked for the duration of the export; a second writer
/// fails with [`DataError::Locked`]. A previous `windows/` tree is replaced.
/// The manifest is written last, so a readable manifest means a complete
/// export.
pub fn export_paired_dataset(
    script: &KinematicScript,
    map: &CoordinateMap,
    out: &Path,
    options: &ExportOptions,
) -> Result<DatasetManifest> {
    let sim = Simulator::with_map(*map);
    let windows = build_windows(script, &sim, options.real_frames.as_deref())?;
    let _lock = DirLock::acquire(out)?;
    let manifest_path = out.join("manifest.json");
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(io_err(&manifest_path))?;
    }
    let root = out.join("windows");
    if root.exists() {
        fs::remove_dir_all(&root).map_err(io_err(&root))?;
    }
    save_script(script, &out.join("script.jsonl"))?;
    let layout = layout_for(script);
    for w in &windows {
        write_window(&root.join(&w.window_id), w, &layout, options.capacity())?;
    }
    let covered = windows.last().map_or(0, |w| w.start_frame + WINDOW_LEN);
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION.into(),
        source_id: script.source_id.clone(),
        fps: EXPORT_FPS,
        frame_count: script.len(),
        window_len: WINDOW_LEN,
        window_stride: WINDOW_STRIDE,
        resolution: (map.image_width, map.image_height),
        sim_scale: map.sim_scale,
        dropped_tail_frames: script.len() - covered,
        windows: windows
            .iter()
            .map(|w| WindowSummary {
                window_id: w.window_id.clone(),
                start_frame: w.start_frame,
                end_frame: w.start_frame + WINDOW_LEN - 1,
                first_frame_overlap: w.first_frame_overlap,
            })
            .collect(),
        splits: options.splits.clone(),
    };
    write_json(&manifest_path, &manifest)?;
    Ok(manifest)
}

pub fn load_dataset_manifest(out: &Path) -> Result<DatasetManifest> {
    read_versioned_json(&out.join("manifest.json"))
}

/// Reads one window directory back into memory.
pub fn load_window(dir: &Path) -> Result<PairedWindow> {
    let file: WindowFile = read_versioned_json(&dir.join("window.json"))?;
    let graphs_path = dir.join("graphs.jsonl");
    let graphs = load_graphs(&graphs_path)?;
    if graphs.len() != file.frames.len() {
        return Err(corrupt(
            &graphs_path,
            format!("{} graphs for {} frames", graphs.len(), file.frames.len()),
        ));
    }
    let frames = file
        .frames
        .into_iter()
        .zip(graphs)
        .map(|(f, graph)| {
            let lp = dir.join(&f.labels);
            let fp = dir.join(&f.sim_frame);
            Ok(WindowFrame {
                frame_index: f.frame_index,
                labels: decode_label_png(&read_bytes(&lp)?, &lp)?,
                sim_frame: decode_frame_png(&read_bytes(&fp)?, &fp)?,
                graph,
                phase: f.phase,
                real_frame: f.real_frame,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PairedWindow {
        window_id: file.window_id,
        start_frame: file.start_frame,
        fps: file.fps,
        first_frame_overlap: file.first_frame_overlap,
        frames,
    })
}

/// Reads a window's feature matrix back as per-frame vectors.
pub fn load_features(dir: &Path) -> Result<Vec<GraphFeatures>> {
    let side: FeatureSidecar = read_versioned_json(&dir.join("features.json"))?;
    let npy = dir.join("features.npy");
    let array: Array2<f32> = ndarray_npy::read_npy(&npy).map_err(|e| corrupt(&npy, e))?;
    let width = side.max_nodes * side.block_len;
    if array.ncols() != width || array.nrows() != side.frame_indices.len() || side.node_counts.len() != array.nrows() {
        return Err(corrupt(
            &npy,
            format!("shape {:?} does not match the sidecar", array.shape()),
        ));
    }
    Ok(array
        .rows()
        .into_iter()
        .zip(side.frame_indices.iter().zip(&side.node_counts))
        .map(|(row, (&frame_index, &node_count))| GraphFeatures {
            layout_version: side.layout_version.clone(),
            frame_index,
            max_nodes: side.max_nodes,
            block_len: side.block_len,
            class_vocab: side.class_vocab.clone(),
            node_count,
            values: row.to_vec(),
        })
        .collect())
}
