//! Line-delimited JSON for kinematic scripts and scene-graph sequences.
//!
//! Each file starts with a `header` record; the remaining lines are one
//! record each. Floats use shortest round-trip formatting, so save → load →
//! save reproduces the file byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_version, corrupt, read_bytes, write_bytes, Result, FORMAT_VERSION};
use crate::kinex::{AnatomyState, KinematicScript, Phase, ProvenanceEvent, ToolState};
use crate::scenegraph::SceneGraph;

const SCRIPT_KIND: &str = "kinematic_script";
const GRAPHS_KIND: &str = "scene_graphs";

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum ScriptLine {
    Header {
        format_version: String,
        kind: String,
        script_version: String,
        fps: f64,
        source_id: String,
        frame_count: usize,
        has_phase_labels: bool,
    },
    Frame {
        frame: usize,
        anatomy: AnatomyState,
        tools: Vec<ToolState>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phase: Option<Phase>,
    },
    Provenance {
        #[serde(flatten)]
        event: ProvenanceEvent,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum GraphLine {
    Header {
        format_version: String,
        kind: String,
        count: usize,
    },
    Graph(SceneGraph),
}

fn push_line<T: Serialize>(out: &mut String, value: &T) {
    out.push_str(&serde_json::to_string(value).expect("records serialize"));
    out.push('\n');
}

pub fn write_script(script: &KinematicScript) -> String {
    let mut out = String::new();
    push_line(
        &mut out,
        &ScriptLine::Header {
            format_version: FORMAT_VERSION.into(),
            kind: SCRIPT_KIND.into(),
            script_version: script.format_version.clone(),
            fps: script.fps,
            source_id: script.source_id.clone(),
            frame_count: script.frames.len(),
            has_phase_labels: script.phase_labels.is_some(),
        },
    );
    for (i, f) in script.frames.iter().enumerate() {
        push_line(
            &mut out,
            &ScriptLine::Frame {
                frame: i,
                anatomy: f.anatomy,
                tools: f.tools.clone(),
                phase: script.phase_labels.as_ref().map(|p| p[i].clone()),
            },
        );
    }
    for event in &script.provenance {
        push_line(&mut out, &ScriptLine::Provenance { event: event.clone() });
    }
    out
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty())
}

/// Parses a script; `path` only labels errors.
pub fn read_script(text: &str, path: &Path) -> Result<KinematicScript> {
    let mut records = lines(text)
        .map(|(n, l)| serde_json::from_str::<ScriptLine>(l).map_err(|e| corrupt(path, format!("line {}: {e}", n + 1))));
    let header = records.next().ok_or_else(|| corrupt(path, "empty file"))??;
    let ScriptLine::Header {
        format_version,
        kind,
        script_version,
        fps,
        source_id,
        frame_count,
        has_phase_labels,
    } = header
    else {
        return Err(corrupt(path, "first record is not a header"));
    };
    check_version(path, &format_version)?;
    if kind != SCRIPT_KIND {
        return Err(corrupt(path, format!("kind `{kind}`, expected `{SCRIPT_KIND}`")));
    }
    check_version(path, &script_version)?;

    let mut script = KinematicScript::new(fps, Vec::with_capacity(frame_count), source_id);
    script.format_version = script_version;
    let mut phases = Vec::new();
    for record in records {
        match record? {
            ScriptLine::Header { .. } => return Err(corrupt(path, "second header")),
            ScriptLine::Frame {
                frame,
                anatomy,
                tools,
                phase,
            } => {
                if frame != script.frames.len() || !script.provenance.is_empty() {
                    return Err(corrupt(path, format!("frame {frame} out of order")));
                }
                match (phase, has_phase_labels) {
                    (Some(p), true) => phases.push(p),
                    (None, false) => {}
                    _ => {
                        return Err(corrupt(
                            path,
                            format!("frame {frame}: phase label presence disagrees with header"),
                        ))
                    }
                }
                script.frames.push(crate::kinex::ScriptFrame { anatomy, tools });
            }
            ScriptLine::Provenance { event } => script.provenance.push(event),
        }
    }
    if script.frames.len() != frame_count {
        return Err(corrupt(
            path,
            format!("header promises {frame_count} frames, found {}", script.frames.len()),
        ));
    }
    if has_phase_labels {
        script.phase_labels = Some(phases);
    }
    script.validate().map_err(|e| corrupt(path, e))?;
    Ok(script)
}

pub fn save_script(script: &KinematicScript, path: &Path) -> Result<()> {
    write_bytes(path, write_script(script).as_bytes())
}

pub fn load_script(path: &Path) -> Result<KinematicScript> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| corrupt(path, e))?;
    read_script(text, path)
}

pub fn write_graphs(graphs: &[SceneGraph]) -> String {
    let mut out = String::new();
    push_line(
        &mut out,
        &GraphLine::Header {
            format_version: FORMAT_VERSION.into(),
            kind: GRAPHS_KIND.into(),
            count: graphs.len(),
        },
    );
    for g in graphs {
        push_line(&mut out, &GraphLine::Graph(g.clone()));
    }
    out
}

pub fn read_graphs(text: &str, path: &Path) -> Result<Vec<SceneGraph>> {
    let mut records = lines(text)
        .map(|(n, l)| serde_json::from_str::<GraphLine>(l).map_err(|e| corrupt(path, format!("line {}: {e}", n + 1))));
    let Some(GraphLine::Header {
        format_version,
        kind,
        count,
    }) = records.next().transpose()?
    else {
        return Err(corrupt(path, "missing header"));
    };
    check_version(path, &format_version)?;
    if kind != GRAPHS_KIND {
        return Err(corrupt(path, format!("kind `{kind}`, expected `{GRAPHS_KIND}`")));
    }
    let graphs = records
        .map(|r| match r? {
            GraphLine::Graph(g) => Ok(g),
            GraphLine::Header { .. } => Err(corrupt(path, "second header")),
        })
        .collect::<Result<Vec<_>>>()?;
    if graphs.len() != count {
        return Err(corrupt(
            path,
            format!("header promises {count} graphs, found {}", graphs.len()),
        ));
    }
    Ok(graphs)
}

pub fn save_graphs(graphs: &[SceneGraph], path: &Path) -> Result<()> {
    write_bytes(path, write_graphs(graphs).as_bytes())
}

pub fn load_graphs(path: &Path) -> Result<Vec<SceneGraph>> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| corrupt(path, e))?;
    read_graphs(text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::DataError;
    use crate::geometry::Vec2;
    use crate::kinex::{ScriptFrame, ToolClass};
    use crate::renderer::{FlowField, LabelRaster};
    use crate::scenegraph::build_graph;

    fn script() -> KinematicScript {
        let tool = ToolState::new(ToolClass::CAPSULORHEXIS_FORCEPS, Vec2::new(0.1 / 3.0, -0.2), 1.0 / 7.0)
            .with_articulation(0.0, 0.3);
        let frames = (0..5)
            .map(|i| {
                let mut a = AnatomyState::nominal();
                a.globe_translation = Vec2::new(f64::from(i) * 0.0123456789, 1e-17);
                ScriptFrame {
                    anatomy: a,
                    tools: vec![tool],
                }
            })
            .collect();
        let mut s = KinematicScript::new(4.0, frames, "src");
        s.phase_labels = Some(vec![
            Phase::Idle,
            Phase::Capsulorhexis,
            Phase::Capsulorhexis,
            Phase::Other("custom".into()),
            Phase::Idle,
        ]);
        s.provenance.push(ProvenanceEvent::Clamped {
            frame: 2,
            field: "x".into(),
            from: 2.0,
            to: 1.5,
        });
        s
    }

    #[test]
    fn script_round_trip_is_bitwise() {
        let s = script();
        let text = write_script(&s);
        let back = read_script(&text, Path::new("s.jsonl")).unwrap();
        assert_eq!(back, s);
        assert_eq!(write_script(&back), text);

        let mut plain = s.clone();
        plain.phase_labels = None;
        plain.provenance.clear();
        assert_eq!(read_script(&write_script(&plain), Path::new("s")).unwrap(), plain);
    }

    #[test]
    fn script_errors() {
        let p = Path::new("s.jsonl");
        let text = write_script(&script());
        let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_script(&truncated, p), Err(DataError::Corrupt { .. })));
        let half = &text[..text.len() / 2];
        assert!(matches!(read_script(half, p), Err(DataError::Corrupt { .. })));
        let future = text.replacen("\"format_version\":\"1.0\"", "\"format_version\":\"3.0\"", 1);
        assert!(matches!(
            read_script(&future, p),
            Err(DataError::SchemaVersionMismatch { .. })
        ));
        assert!(matches!(read_script("", p), Err(DataError::Corrupt { .. })));
    }

    #[test]
    fn graph_round_trip_is_bitwise() {
        let mut r = LabelRaster::new(9, 9);
        r.set(1, 1, 3);
        r.set(2, 2, 12);
        r.set(7, 3, 2);
        let mut flow = FlowField::zeros(9, 9);
        flow.u.iter_mut().enumerate().for_each(|(i, u)| *u = i as f64 / 3.0);
        let graphs = vec![
            build_graph(0, &r, &flow).unwrap(),
            build_graph(1, &r, &FlowField::zeros(9, 9)).unwrap(),
        ];
        let text = write_graphs(&graphs);
        let back = read_graphs(&text, Path::new("g.jsonl")).unwrap();
        assert_eq!(back, graphs);
        assert_eq!(write_graphs(&back), text);
        let missing: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            read_graphs(&missing, Path::new("g")),
            Err(DataError::Corrupt { .. })
        ));
    }
}
