//! Python bindings.
//!
//! Structured values cross the boundary as plain Python objects (dicts,
//! lists, numbers) with the same layout as the JSON formats; any argument
//! documented as an object may also be passed as a JSON string. Label
//! rasters are returned as row-major `bytes` of class ids.

use std::path::PathBuf;

use phacosim_core::dataio::{self, export_paired_dataset, ExportOptions};
use phacosim_core::geometry::{fit_ellipse_moments, fit_similarity, BinaryMask, CoordinateMap, Vec2};
use phacosim_core::kinex::KinematicScript;
use phacosim_core::renderer::{FlowField, LabelRaster, ToolLibrary, MIN_RESOLUTION};
use phacosim_core::roundtrip::{run_roundtrip, Tolerances};
use phacosim_core::scenegraph::{build_graph, graph_features, FeatureLayout, SceneGraph};
use phacosim_core::session::{Observation, SessionManager};
use phacosim_core::simulator::{generate_ood_scenario, Action, OodRequest, ScenarioSpec, SimState, Simulator};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyString};
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(
    phacosim,
    PhacosimError,
    PyException,
    "Raised with args (kind, message)."
);

fn err(kind: &str, message: impl ToString) -> PyErr {
    PhacosimError::new_err((kind.to_string(), message.to_string()))
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err("Serialize", e))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if obj.is_instance_of::<PyString>() {
        obj.extract()?
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| err("BadInput", e))
}

fn square_map(resolution: u32, sim_scale: f64) -> PyResult<CoordinateMap> {
    if resolution < MIN_RESOLUTION {
        return Err(err("BadInput", format!("resolution must be at least {MIN_RESOLUTION}")));
    }
    if !(sim_scale > 0.0 && sim_scale.is_finite()) {
        return Err(err("BadInput", "sim_scale must be positive"));
    }
    Ok(CoordinateMap::square(resolution, sim_scale))
}

fn raster_from(labels: &[u8], width: u32, height: u32) -> PyResult<LabelRaster> {
    if labels.len() != width as usize * height as usize {
        return Err(err(
            "BadInput",
            format!("{} label bytes for a {width}x{height} raster", labels.len()),
        ));
    }
    Ok(LabelRaster {
        width,
        height,
        labels: labels.to_vec(),
    })
}

/// Moment ellipse of a boolean mask given as rows.
#[pyfunction]
fn fit_ellipse(py: Python<'_>, mask: Vec<Vec<bool>>) -> PyResult<Bound<'_, PyAny>> {
    let height = mask.len() as u32;
    let width = mask.first().map_or(0, Vec::len) as u32;
    if mask.iter().any(|r| r.len() != width as usize) {
        return Err(err("BadInput", "mask rows differ in length"));
    }
    let m = BinaryMask::from_fn(width, height, |x, y| mask[y as usize][x as usize]);
    let e = fit_ellipse_moments(&m).map_err(|e| err("Geometry", e))?;
    to_py(py, &e)
}

/// Least-squares similarity from `src` to `dst` point lists.
#[pyfunction]
fn similarity(py: Python<'_>, src: Vec<(f64, f64)>, dst: Vec<(f64, f64)>) -> PyResult<Bound<'_, PyAny>> {
    let pts = |v: Vec<(f64, f64)>| v.into_iter().map(|(x, y)| Vec2::new(x, y)).collect::<Vec<_>>();
    let fit = fit_similarity(&pts(src), &pts(dst)).map_err(|e| err("Geometry", e))?;
    let out = PyDict::new(py);
    out.set_item("transform", to_py(py, &fit.transform)?)?;
    out.set_item("rms", fit.rms)?;
    Ok(out.into_any())
}

/// Scene graph of a raster, with optional per-pixel flow components.
#[pyfunction]
#[pyo3(signature = (labels, width, height, frame_index=0, flow_u=None, flow_v=None))]
fn scene_graph<'py>(
    py: Python<'py>,
    labels: &[u8],
    width: u32,
    height: u32,
    frame_index: u64,
    flow_u: Option<Vec<f64>>,
    flow_v: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let raster = raster_from(labels, width, height)?;
    let mut flow = FlowField::zeros(width, height);
    match (flow_u, flow_v) {
        (Some(u), Some(v)) => {
            flow.u = u;
            flow.v = v;
        }
        (None, None) => {}
        _ => return Err(err("BadInput", "pass both flow components or neither")),
    }
    if flow.u.len() != raster.labels.len() || flow.v.len() != raster.labels.len() {
        return Err(err("BadInput", "flow size differs from the raster"));
    }
    let g = build_graph(frame_index, &raster, &flow).map_err(|e| err("SceneGraph", e))?;
    to_py(py, &g)
}

/// Fixed-width feature vector of a scene graph.
#[pyfunction]
#[pyo3(signature = (graph, max_nodes=32))]
fn features<'py>(py: Python<'py>, graph: &Bound<'py, PyAny>, max_nodes: usize) -> PyResult<Bound<'py, PyAny>> {
    let g: SceneGraph = from_py(graph)?;
    let f = graph_features(&g, max_nodes, &FeatureLayout::default()).map_err(|e| err("SceneGraph", e))?;
    to_py(py, &f)
}

/// Script for an out-of-distribution request.
#[pyfunction]
fn generate_ood<'py>(py: Python<'py>, request: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let req: OodRequest = from_py(request)?;
    let script = generate_ood_scenario(&req).map_err(|e| err(e.kind(), &e))?;
    to_py(py, &script)
}

#[pyfunction]
fn script_to_jsonl(script: &Bound<'_, PyAny>) -> PyResult<String> {
    let s: KinematicScript = from_py(script)?;
    Ok(dataio::write_script(&s))
}

#[pyfunction]
fn script_from_jsonl<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let s = dataio::read_script(text, "<python>".as_ref()).map_err(|e| err(e.kind(), &e))?;
    to_py(py, &s)
}

/// Render → extract → compare for one seeded scenario.
#[pyfunction]
#[pyo3(signature = (seed, frames, resolution=128))]
fn roundtrip(py: Python<'_>, seed: u64, frames: usize, resolution: u32) -> PyResult<Bound<'_, PyAny>> {
    let map = square_map(resolution, 1.0)?;
    let report = py
        .detach(|| run_roundtrip(seed, frames, map, &Tolerances::default()))
        .map_err(|e| err("Roundtrip", e))?;
    to_py(py, &report)
}

/// Writes the windowed dataset for a script and returns its manifest.
#[pyfunction]
#[pyo3(signature = (script, out, resolution=128, max_nodes=32))]
fn export_dataset<'py>(
    py: Python<'py>,
    script: &Bound<'py, PyAny>,
    out: PathBuf,
    resolution: u32,
    max_nodes: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let s: KinematicScript = from_py(script)?;
    let map = square_map(resolution, 1.0)?;
    let options = ExportOptions {
        max_nodes,
        ..ExportOptions::default()
    };
    let manifest = py
        .detach(|| export_paired_dataset(&s, &map, &out, &options))
        .map_err(|e| err(e.kind(), &e))?;
    to_py(py, &manifest)
}

/// Transition function and renderer at a fixed resolution.
#[pyclass(name = "Simulator", frozen)]
struct PySimulator {
    sim: Simulator,
}

#[pymethods]
impl PySimulator {
    #[new]
    #[pyo3(signature = (resolution=128, sim_scale=1.0))]
    fn new(resolution: u32, sim_scale: f64) -> PyResult<Self> {
        Ok(Self {
            sim: Simulator::with_map(square_map(resolution, sim_scale)?),
        })
    }

    #[getter]
    fn resolution(&self) -> u32 {
        self.sim.map().image_width
    }

    /// Nominal scenario for this image size.
    fn nominal_scenario<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &ScenarioSpec::nominal(self.sim.map()))
    }

    fn render<'py>(&self, py: Python<'py>, state: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyBytes>> {
        let s: SimState = from_py(state)?;
        Ok(PyBytes::new(py, &self.sim.renderer.labels(&s).labels))
    }

    /// One transition; returns `(next_state, label_bytes)`.
    fn step<'py>(
        &self,
        py: Python<'py>,
        state: &Bound<'py, PyAny>,
        action: &Bound<'py, PyAny>,
    ) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyBytes>)> {
        let s: SimState = from_py(state)?;
        let a: Action = from_py(action)?;
        let (next, raster) = self.sim.transition(&s, &a).map_err(|e| err(e.kind(), &e))?;
        Ok((to_py(py, &next)?, PyBytes::new(py, &raster.labels)))
    }

    /// Replays a script; returns `(states, [label_bytes, ...])`.
    fn replay<'py>(
        &self,
        py: Python<'py>,
        script: &Bound<'py, PyAny>,
    ) -> PyResult<(Bound<'py, PyAny>, Vec<Bound<'py, PyBytes>>)> {
        let s: KinematicScript = from_py(script)?;
        let (states, rasters) = py.detach(|| self.sim.replay(&s)).map_err(|e| err(e.kind(), &e))?;
        let rasters = rasters.iter().map(|r| PyBytes::new(py, &r.labels)).collect();
        Ok((to_py(py, &states)?, rasters))
    }
}

/// In-process session service.
#[pyclass(name = "Sessions", frozen)]
struct PySessions {
    inner: SessionManager,
}

fn observation<'py>(py: Python<'py>, obs: &Observation) -> PyResult<Bound<'py, PyAny>> {
    let d = PyDict::new(py);
    d.set_item("frame_index", obs.frame_index)?;
    d.set_item("state", to_py(py, &obs.state)?)?;
    d.set_item("labels", PyBytes::new(py, &obs.labels.labels))?;
    d.set_item("width", obs.labels.width)?;
    d.set_item("height", obs.labels.height)?;
    d.set_item("graph", to_py(py, &obs.graph)?)?;
    Ok(d.into_any())
}

#[pymethods]
impl PySessions {
    #[new]
    #[pyo3(signature = (resolution=128, sim_scale=1.0))]
    fn new(resolution: u32, sim_scale: f64) -> PyResult<Self> {
        Ok(Self {
            inner: SessionManager::new(square_map(resolution, sim_scale)?, ToolLibrary::builtin()),
        })
    }

    #[pyo3(signature = (scenario=None))]
    fn create(&self, scenario: Option<&Bound<'_, PyAny>>) -> PyResult<String> {
        let spec = match scenario {
            Some(s) => from_py(s)?,
            None => ScenarioSpec::nominal(self.inner.map()),
        };
        self.inner.create(spec).map_err(|e| err(e.kind(), &e))
    }

    fn step<'py>(&self, py: Python<'py>, session_id: &str, action: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        let a: Action = from_py(action)?;
        let obs = self.inner.step(session_id, &a).map_err(|e| err(e.kind(), &e))?;
        observation(py, &obs)
    }

    fn reset<'py>(&self, py: Python<'py>, session_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let obs = self.inner.reset(session_id).map_err(|e| err(e.kind(), &e))?;
        observation(py, &obs)
    }

    fn observe<'py>(&self, py: Python<'py>, session_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let obs = self.inner.observe(session_id).map_err(|e| err(e.kind(), &e))?;
        observation(py, &obs)
    }

    #[pyo3(signature = (session_id, fps=4.0))]
    fn export<'py>(&self, py: Python<'py>, session_id: &str, fps: f64) -> PyResult<Bound<'py, PyAny>> {
        let s = self.inner.export(session_id, fps).map_err(|e| err(e.kind(), &e))?;
        to_py(py, &s)
    }

    /// State recomputed from the session's action log.
    fn replay_log<'py>(&self, py: Python<'py>, session_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let s = self.inner.replay_log(session_id).map_err(|e| err(e.kind(), &e))?;
        to_py(py, &s)
    }

    fn checkpoint<'py>(&self, py: Python<'py>, session_id: &str) -> PyResult<Bound<'py, PyAny>> {
        let c = self.inner.checkpoint(session_id).map_err(|e| err(e.kind(), &e))?;
        to_py(py, &c)
    }
}

#[pymodule]
fn phacosim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("FORMAT_VERSION", dataio::FORMAT_VERSION)?;
    m.add("PhacosimError", m.py().get_type::<PhacosimError>())?;
    m.add_class::<PySimulator>()?;
    m.add_class::<PySessions>()?;
    m.add_function(wrap_pyfunction!(fit_ellipse, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(scene_graph, m)?)?;
    m.add_function(wrap_pyfunction!(features, m)?)?;
    m.add_function(wrap_pyfunction!(generate_ood, m)?)?;
    m.add_function(wrap_pyfunction!(script_to_jsonl, m)?)?;
    m.add_function(wrap_pyfunction!(script_from_jsonl, m)?)?;
    m.add_function(wrap_pyfunction!(roundtrip, m)?)?;
    m.add_function(wrap_pyfunction!(export_dataset, m)?)?;
    Ok(())
}
